//! Trajectories, regret, ECDFs, rank-over-time and sign-test comparisons.
//!
//! Everything here is a pure function of run records. The CSV and plot
//! JSON writers at the bottom are what the `analyze` command emits.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::configspace::FidelityPoint;
use crate::runner::RunRecord;

/// Default tolerance for calling two medians a tie.
pub const TIE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("best-known value {best_known} is above incumbent {incumbent}")]
    BestKnownAboveIncumbent { best_known: f64, incumbent: f64 },
    #[error("nothing to analyze: {0}")]
    Empty(String),
    #[error("benchmark sets differ: {0}")]
    MismatchedBenchmarks(String),
    #[error("no effective comparisons after discarding ties")]
    NoComparisons,
    #[error("need at least one comparison")]
    NoCorrection,
    #[error("records mix benchmarks {0:?}; group them per family")]
    MixedBenchmarks(Vec<String>),
    #[error("output: {0}")]
    Output(String),
}

impl From<std::io::Error> for AnalysisError {
    fn from(e: std::io::Error) -> Self {
        Self::Output(e.to_string())
    }
}

impl From<csv::Error> for AnalysisError {
    fn from(e: csv::Error) -> Self {
        Self::Output(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub loss: f64,
    pub fidelity: FidelityPoint,
}

/// Incumbent over simulated time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Incumbent at time `t` by previous-point interpolation; `None` before
    /// the first point.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let i = self.points.partition_point(|p| p.time <= t);
        (i > 0).then(|| self.points[i - 1].loss)
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }
}

/// Incumbents from `(finish time, loss, fidelity)` triples in evaluation
/// order.
///
/// An evaluation on a fidelity strictly above everything seen so far
/// becomes the incumbent even if its loss is higher. One on the current
/// highest fidelity replaces the incumbent only when its loss is lower.
/// Anything else is ignored.
pub fn trajectory_from<'a, I>(evaluations: I) -> Trajectory
where
    I: IntoIterator<Item = (f64, f64, &'a FidelityPoint)>,
{
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    let mut top: Option<(&FidelityPoint, f64)> = None;
    for (time, loss, fidelity) in evaluations {
        let take = match top {
            None => true,
            Some((f, best)) => match fidelity.compare(f) {
                Ordering::Greater => true,
                Ordering::Equal => loss < best,
                Ordering::Less => false,
            },
        };
        if !take {
            continue;
        }
        top = Some((fidelity, loss));
        let point = TrajectoryPoint {
            time,
            loss,
            fidelity: fidelity.clone(),
        };
        match points.last_mut() {
            Some(last) if last.time == time => *last = point,
            _ => points.push(point),
        }
    }
    Trajectory { points }
}

pub fn compute_trajectory(record: &RunRecord) -> Trajectory {
    trajectory_from(record.entries.iter().map(|e| (e.sim_time, e.loss(), &e.fidelity)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// False when no best-known value exists and `values` are raw losses.
    pub is_regret: bool,
}

pub fn compute_regret(trajectory: &Trajectory, best_known: Option<f64>) -> Result<RegretSeries, AnalysisError> {
    let times = trajectory.points.iter().map(|p| p.time).collect();
    let Some(best) = best_known else {
        return Ok(RegretSeries {
            times,
            values: trajectory.points.iter().map(|p| p.loss).collect(),
            is_regret: false,
        });
    };
    let values = trajectory
        .points
        .iter()
        .map(|p| {
            if best > p.loss {
                Err(AnalysisError::BestKnownAboveIncumbent {
                    best_known: best,
                    incumbent: p.loss,
                })
            } else {
                Ok(p.loss - best)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(RegretSeries {
        times,
        values,
        is_regret: true,
    })
}

/// Regret trajectory of a record, with the record's own best-known value.
pub fn record_regret(record: &RunRecord) -> Result<Trajectory, AnalysisError> {
    let mut t = compute_trajectory(record);
    let r = compute_regret(&t, record.header.known_best)?;
    for (p, v) in t.points.iter_mut().zip(r.values) {
        p.loss = v;
    }
    Ok(t)
}

/// Min-max normalized values as ECDF steps `(value, fraction <= value)`,
/// one step per distinct value. A constant set normalizes to all zeros.
pub fn ecdf_normalized_regret(values: &[f64]) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty("no values for the ECDF".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut norm: Vec<f64> = if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    };
    norm.sort_by(f64::total_cmp);
    let n = norm.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, v) in norm.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => steps.push((*v, frac)),
        }
    }
    Ok(steps)
}

/// `n` log-spaced times from `t_min` to `t_max`, both included.
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![t_max];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                t_max
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Fractional (mean) ranks, 1-based; lower values rank first.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Per-optimizer repetitions of one benchmark.
pub type TrajectorySet = IndexMap<String, Vec<Trajectory>>;

/// Mean rank per optimizer and grid time, averaged over repetitions and
/// over every benchmark in `sets`. Repetition `i` of each optimizer is
/// ranked against repetition `i` of the others; optimizers with no value
/// yet at a time sit out that ranking. `None` marks times at which an
/// optimizer was never ranked.
pub fn rank_over_time(sets: &[TrajectorySet], grid: &[f64]) -> Result<IndexMap<String, Vec<Option<f64>>>, AnalysisError> {
    if sets.is_empty() || sets.iter().all(|s| s.is_empty()) {
        return Err(AnalysisError::Empty("no trajectories to rank".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for s in sets {
        for k in s.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    if names.len() < 2 {
        return Err(AnalysisError::Empty("ranking needs at least two optimizers".into()));
    }
    let mut sum = vec![vec![0.0; grid.len()]; names.len()];
    let mut count = vec![vec![0usize; grid.len()]; names.len()];
    for set in sets {
        let reps = set.values().map(Vec::len).max().unwrap_or(0);
        for rep in 0..reps {
            for (g, &t) in grid.iter().enumerate() {
                let mut who = Vec::new();
                let mut vals = Vec::new();
                for (name, trajs) in set {
                    if let Some(v) = trajs.get(rep).and_then(|tr| tr.value_at(t)) {
                        who.push(names.iter().position(|n| n == name).expect("collected"));
                        vals.push(v);
                    }
                }
                if vals.is_empty() {
                    continue;
                }
                for (k, r) in who.into_iter().zip(fractional_ranks(&vals)) {
                    sum[k][g] += r;
                    count[k][g] += 1;
                }
            }
        }
    }
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(k, n)| {
            let ranks = (0..grid.len())
                .map(|g| (count[k][g] > 0).then(|| sum[k][g] / count[k][g] as f64))
                .collect();
            (n, ranks)
        })
        .collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Wtl {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

/// Challenger wins on a benchmark iff its summary is lower than the
/// baseline's by more than `eps`. Missing values (`NaN`) count as `+inf`.
pub fn count_wtl(
    challenger: &BTreeMap<String, f64>,
    baseline: &BTreeMap<String, f64>,
    eps: f64,
) -> Result<Wtl, AnalysisError> {
    if challenger.keys().ne(baseline.keys()) {
        let a: Vec<_> = challenger.keys().collect();
        let b: Vec<_> = baseline.keys().collect();
        return Err(AnalysisError::MismatchedBenchmarks(format!("{a:?} vs {b:?}")));
    }
    let fix = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut out = Wtl::default();
    for (k, &c) in challenger {
        let (c, b) = (fix(c), fix(baseline[k]));
        if c == b || (c - b).abs() <= eps {
            out.ties += 1;
        } else if c < b {
            out.wins += 1;
        } else {
            out.losses += 1;
        }
    }
    Ok(out)
}

/// One-sided sign test that the challenger is better. Ties are split
/// evenly between wins and losses after discarding one tie when their
/// number is odd; the p-value is `P(X >= w')` for `X ~ Binomial(n', 1/2)`.
pub fn sign_test(wins: usize, ties: usize, losses: usize) -> Result<f64, AnalysisError> {
    let ties = ties - ties % 2;
    let w = wins + ties / 2;
    let n = wins + ties + losses;
    if n == 0 {
        return Err(AnalysisError::NoComparisons);
    }
    let ln2 = std::f64::consts::LN_2;
    let p: f64 = (w..=n)
        .map(|k| (ln_binomial(n as u64, k as u64) - n as f64 * ln2).exp())
        .sum();
    Ok(p.min(1.0))
}

/// `(p < alpha, p < alpha / n_comparisons)`.
pub fn bonferroni(p: f64, n_comparisons: usize, alpha: f64) -> Result<(bool, bool), AnalysisError> {
    if n_comparisons == 0 {
        return Err(AnalysisError::NoCorrection);
    }
    Ok((p < alpha, p < alpha / n_comparisons as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub challenger: String,
    pub baseline: String,
    pub budget_fraction: f64,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub p_value: f64,
    pub significant: bool,
    pub significant_corrected: bool,
}

/// Records grouped by benchmark, then optimizer, each list sorted by seed.
pub type Grouped<'a> = BTreeMap<String, BTreeMap<String, Vec<&'a RunRecord>>>;

pub fn group_records(records: &[RunRecord]) -> Grouped<'_> {
    let mut out: Grouped<'_> = BTreeMap::new();
    for r in records {
        out.entry(r.header.benchmark.clone())
            .or_default()
            .entry(r.header.optimizer.clone())
            .or_default()
            .push(r);
    }
    for by_opt in out.values_mut() {
        for v in by_opt.values_mut() {
            v.sort_by_key(|r| r.header.seed);
        }
    }
    out
}

/// Median over repetitions of the regret at `fraction` of each run's
/// budget, or `NaN` when no repetition has a value by then.
pub fn median_regret_at(records: &[&RunRecord], fraction: f64) -> Result<f64, AnalysisError> {
    let mut vals = Vec::with_capacity(records.len());
    for r in records {
        let t = record_regret(r)?;
        vals.push(t.value_at(fraction * r.header.budget).unwrap_or(f64::INFINITY));
    }
    Ok(median(&vals).filter(|m| m.is_finite()).unwrap_or(f64::NAN))
}

/// Sign-test comparisons of each challenger against `baseline` at each
/// budget fraction; the Bonferroni correction divides by the number of
/// challengers.
pub fn compare_optimizers(
    records: &[RunRecord],
    baseline: &str,
    challengers: &[String],
    fractions: &[f64],
    alpha: f64,
) -> Result<Vec<ComparisonResult>, AnalysisError> {
    let grouped = group_records(records);
    if grouped.is_empty() {
        return Err(AnalysisError::Empty("no records".into()));
    }
    let summary = |opt: &str, f: f64| -> Result<BTreeMap<String, f64>, AnalysisError> {
        let mut m = BTreeMap::new();
        for (bench, by_opt) in &grouped {
            if let Some(rs) = by_opt.get(opt) {
                m.insert(bench.clone(), median_regret_at(rs, f)?);
            }
        }
        Ok(m)
    };
    let mut out = Vec::new();
    for &f in fractions {
        let base = summary(baseline, f)?;
        for c in challengers {
            let wtl = count_wtl(&summary(c, f)?, &base, TIE_EPSILON)?;
            let p = sign_test(wtl.wins, wtl.ties, wtl.losses)?;
            let (sig, corrected) = bonferroni(p, challengers.len(), alpha)?;
            out.push(ComparisonResult {
                challenger: c.clone(),
                baseline: baseline.to_string(),
                budget_fraction: f,
                wins: wtl.wins,
                ties: wtl.ties,
                losses: wtl.losses,
                p_value: p,
                significant: sig,
                significant_corrected: corrected,
            });
        }
    }
    Ok(out)
}

/// Named `(x, y)` series for external plotting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotData {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), AnalysisError> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| AnalysisError::Output(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }
}

/// `benchmark, optimizer, seed, time, regret, is_regret, fidelity`.
pub fn write_trajectories_csv<W: Write>(records: &[RunRecord], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["benchmark", "optimizer", "seed", "time", "value", "is_regret", "fidelity"])?;
    for r in records {
        let t = compute_trajectory(r);
        let reg = compute_regret(&t, r.header.known_best)?;
        for (p, v) in t.points.iter().zip(&reg.values) {
            let fid: Vec<String> = p.fidelity.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.write_record([
                r.header.benchmark.clone(),
                r.header.optimizer.clone(),
                r.header.seed.to_string(),
                p.time.to_string(),
                v.to_string(),
                reg.is_regret.to_string(),
                fid.join(";"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `time, <optimizer>...`; empty cells where an optimizer is unranked.
pub fn write_ranks_csv<W: Write>(grid: &[f64], ranks: &IndexMap<String, Vec<Option<f64>>>, w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string()];
    header.extend(ranks.keys().cloned());
    out.write_record(&header)?;
    for (g, t) in grid.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(ranks.values().map(|r| r[g].map(|v| v.to_string()).unwrap_or_default()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn ranks_plot(grid: &[f64], ranks: &IndexMap<String, Vec<Option<f64>>>) -> PlotData {
    PlotData {
        title: "mean rank over time".into(),
        x_label: "simulated time".into(),
        y_label: "mean rank".into(),
        series: ranks
            .iter()
            .map(|(name, r)| Series {
                name: name.clone(),
                points: grid.iter().zip(r).filter_map(|(t, v)| v.map(|v| (*t, v))).collect(),
            })
            .collect(),
    }
}

/// `budget_fraction, challenger, baseline, wins, ties, losses, p_value,
/// significant, significant_corrected`; p-values are printed with 5
/// decimals.
pub fn write_signtest_csv<W: Write>(results: &[ComparisonResult], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "budget_fraction",
        "challenger",
        "baseline",
        "wins",
        "ties",
        "losses",
        "p_value",
        "significant",
        "significant_corrected",
    ])?;
    for r in results {
        out.write_record([
            r.budget_fraction.to_string(),
            r.challenger.clone(),
            r.baseline.clone(),
            r.wins.to_string(),
            r.ties.to_string(),
            r.losses.to_string(),
            format!("{:.5}", r.p_value),
            r.significant.to_string(),
            r.significant_corrected.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ecdf_csv<W: Write>(steps: &[(f64, f64)], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["normalized_regret", "fraction"])?;
    for (v, f) in steps {
        out.write_record([v.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
