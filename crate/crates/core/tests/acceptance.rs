//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfbench::analysis::{self, bonferroni, compute_trajectory, median_regret_at, sign_test};
use mfbench::benchmarks::catalog::{self, family_spaces, synthetic_suite};
use mfbench::benchmarks::{
    generate_table, Benchmark, BenchmarkClass, Seed, SeedMode, TabularBenchmark,
};
use mfbench::cli;
use mfbench::configspace::{
    Configuration, ConfigurationSpace, FidelityPoint, GridBins, HyperparameterSpec, Value,
};
use mfbench::optimizers::{
    hb_schedule, HBParams, Hyperband, KDEParams, Observation, Optimizer, Problem,
};
use mfbench::optimizers::kde::kde_fit;
use mfbench::runner::{run_repetitions, OptimizerSpec, OverheadMode, RunEntry, RunHeader, RunOptions, RunRecord};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn r5(p: f64) -> f64 {
    (p * 1e5).round() / 1e5
}

// (challenger, w, t, l, expected p)
const GOLDEN_BLACK_BOX: [(&str, usize, usize, usize, f64); 5] = [
    ("DE", 18, 2, 2, 0.00043),
    ("BO_GP", 15, 3, 4, 0.01330),
    ("BO_RF", 19, 3, 0, 0.00001),
    ("HEBO", 17, 2, 3, 0.00217),
    ("BO_KDE", 13, 4, 5, 0.06690),
];
const GOLDEN_MULTI_FIDELITY: [(&str, usize, usize, usize, f64); 4] = [
    ("BOHB", 13, 4, 5, 0.06690),
    ("DEHB", 20, 2, 0, 0.00001),
    ("SMAC-HB", 18, 3, 1, 0.00011),
    ("DF", 5, 0, 17, 0.99783),
];
// (budget, comparison, w, t, l, expected p)
const GOLDEN_BY_BUDGET: [(&str, &str, usize, usize, usize, f64); 12] = [
    ("100%", "HB/RS", 16, 5, 1, 0.00074),
    ("100%", "DEHB/DE", 6, 8, 8, 0.73827),
    ("100%", "BOHB/BO_KDE", 12, 4, 6, 0.14314),
    ("100%", "SMAC-HB/BO_RF", 6, 8, 8, 0.73827),
    ("10%", "HB/RS", 16, 2, 4, 0.00845),
    ("10%", "DEHB/DE", 10, 9, 3, 0.09462),
    ("10%", "BOHB/BO_KDE", 12, 4, 6, 0.14314),
    ("10%", "SMAC-HB/BO_RF", 8, 7, 7, 0.50000),
    ("1%", "HB/RS", 17, 3, 2, 0.00074),
    ("1%", "DEHB/DE", 14, 3, 5, 0.03918),
    ("1%", "BOHB/BO_KDE", 14, 2, 6, 0.06690),
    ("1%", "SMAC-HB/BO_RF", 13, 5, 4, 0.03918),
];

fn criterion_1() -> Outcome {
    let mut bad = Vec::new();
    let t2 = GOLDEN_BLACK_BOX.iter().chain(&GOLDEN_MULTI_FIDELITY).map(|&(n, w, t, l, p)| (n.to_string(), w, t, l, p));
    let t3 = GOLDEN_BY_BUDGET.iter().map(|&(b, n, w, t, l, p)| (format!("{b} {n}"), w, t, l, p));
    let all: Vec<_> = t2.chain(t3).collect();
    for (name, w, t, l, expected) in &all {
        let p = sign_test(*w, *t, *l).expect("non-empty comparison");
        if r5(p) != *expected {
            bad.push(format!("{name} ({w},{t},{l}) -> {p:.5}, expected {expected:.5}"));
        }
    }
    outcome(bad.is_empty(), format!("{} triples, mismatches: {bad:?}", all.len()))
}

fn criterion_2() -> Outcome {
    // (significant, significant after correction)
    let expected_bb = [(true, true), (true, false), (true, true), (true, true), (false, false)];
    let expected_mf = [(false, false), (true, true), (true, true), (false, false)];
    let mut bad = Vec::new();
    for (rows, expected, n) in [(&GOLDEN_BLACK_BOX[..], &expected_bb[..], 5), (&GOLDEN_MULTI_FIDELITY[..], &expected_mf[..], 4)] {
        for (&(name, _, _, _, p), &want) in rows.iter().zip(expected) {
            let got = bonferroni(p, n, 0.05).expect("valid inputs");
            if got != want {
                bad.push(format!("{name}: got {got:?}, expected {want:?}"));
            }
        }
    }
    outcome(bad.is_empty(), format!("9 flags, mismatches: {bad:?}"))
}

fn fidelity_point(b: i64) -> FidelityPoint {
    let mut f = FidelityPoint::default();
    f.insert("b", Value::Int(b));
    f
}

fn synthetic_record(evals: &[(f64, f64, i64)]) -> RunRecord {
    let mut sim = 0.0;
    let entries = evals
        .iter()
        .enumerate()
        .map(|(index, &(cost, loss, b))| {
            sim += cost;
            RunEntry {
                index,
                config: Configuration::new(),
                fidelity: fidelity_point(b),
                seed: Seed::Fixed(0),
                metrics: [("loss".to_string(), loss)].into_iter().collect(),
                cost,
                overhead: 0.0,
                sim_time: sim,
                tag: String::new(),
            }
        })
        .collect();
    RunRecord {
        header: RunHeader {
            benchmark: "fuzz".into(),
            class: BenchmarkClass::Raw,
            metric: "loss".into(),
            known_best: None,
            optimizer: "none".into(),
            params: BTreeMap::new(),
            seed: 0,
            budget: sim,
            overhead: OverheadMode::Zero,
            failure: None,
        },
        entries,
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let worked = compute_trajectory(&synthetic_record(&[(1.0, 0.5, 1), (1.0, 0.7, 2), (1.0, 0.6, 2)]));
    let losses: Vec<f64> = worked.points.iter().map(|p| p.loss).collect();
    let worked_ok = losses == [0.5, 0.7, 0.6];

    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let eval = (0.01f64..2.0, 0.0f64..1.0, 1i64..5);
    let fuzz = runner.run(&proptest::collection::vec(eval, 1..40), |evals| {
        let t = compute_trajectory(&synthetic_record(&evals));
        for w in t.points.windows(2) {
            prop_assert!(w[1].time > w[0].time);
            let ord = w[1].fidelity.compare(&w[0].fidelity);
            prop_assert!(ord.is_ge());
            if ord.is_eq() {
                prop_assert!(w[1].loss <= w[0].loss);
            }
        }
        // the oracle: all evaluations at one fidelity reduce to a running min
        let flat: Vec<(f64, f64, i64)> = evals.iter().map(|&(c, l, _)| (c, l, 4)).collect();
        let t = compute_trajectory(&synthetic_record(&flat));
        let mut best = f64::INFINITY;
        let mut time = 0.0;
        for &(c, l, _) in &flat {
            time += c;
            let before = best;
            best = best.min(l);
            prop_assert_eq!(t.value_at(time), Some(best));
            if best < before {
                prop_assert!(t.points.iter().any(|p| p.loss == best));
            }
        }
        Ok(())
    });
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        worked_ok && fuzz.is_ok() && elapsed < 10.0,
        format!("worked example {losses:?}, fuzz {:?}, {elapsed:.2}s", fuzz.err().map(|e| e.to_string())),
    )
}

fn criterion_4() -> Outcome {
    let count = |family: &str, bins: usize| {
        let (space, _) = family_spaces(family).expect("shipped family");
        space.discretize_grid(&GridBins::uniform(bins)).expect("grid").len()
    };
    let svm = count("svm", 21);
    let lr = count("logreg", 25);
    outcome(svm == 441 && lr == 625, format!("svm@21 = {svm}, logreg@25 = {lr}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let raw = catalog::synthetic_quadratic(3).expect("builtin");
    let seeds: Vec<u64> = (0..5).collect();
    let store = generate_table(&raw, &GridBins::uniform(6), &GridBins::uniform(5), &seeds).expect("table");
    let fidelities = store.fidelities().to_vec();
    let configs = store.configs().to_vec();
    let tab = TabularBenchmark::new(Arc::new(store), SeedMode::PerSeed).expect("dense table");
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for c in &configs {
        for f in &fidelities {
            for &s in &seeds {
                let want = raw.evaluate(c, f, Seed::Fixed(s)).expect("raw");
                let got = tab.evaluate(c, f, Seed::Fixed(s)).expect("lookup");
                let same = got.cost.to_bits() == want.cost.to_bits()
                    && got.metrics.len() == want.metrics.len()
                    && got.metrics.iter().zip(&want.metrics).all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
                checked += 1;
                mismatches += usize::from(!same);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && fidelities.len() == 5 && elapsed < 30.0,
        format!("{checked} triples, {mismatches} mismatches, {} fidelity steps, {elapsed:.2}s", fidelities.len()),
    )
}

fn criterion_6() -> Outcome {
    let params = HBParams::new(3.0, 1.0, 81.0).expect("valid");
    let schedule = hb_schedule(&params);
    let got: Vec<Vec<(usize, f64)>> = schedule
        .brackets
        .iter()
        .map(|b| b.rungs.iter().map(|r| (r.n_configs, r.fidelity)).collect())
        .collect();
    let want: Vec<Vec<(usize, f64)>> = vec![
        vec![(81, 1.0), (27, 3.0), (9, 9.0), (3, 27.0), (1, 81.0)],
        vec![(34, 3.0), (11, 9.0), (3, 27.0), (1, 81.0)],
        vec![(15, 9.0), (5, 27.0), (1, 81.0)],
        vec![(8, 27.0), (2, 81.0)],
        vec![(5, 81.0)],
    ];
    let schedule_ok = got == want;

    // one full cycle of brackets, then compare (bracket, fidelity) counts
    let bench = catalog::synthetic_quadratic(2).expect("builtin");
    let problem = Problem::from_benchmark(&bench);
    let mut hb = Hyperband::hb(problem, params, 11);
    let total: usize = want.iter().flatten().map(|r| r.0).sum();
    let mut seen: BTreeMap<(usize, i64), usize> = BTreeMap::new();
    let mut legal = true;
    for i in 0..total {
        let p = hb.ask().expect("hb never runs dry when fed");
        legal &= bench.search_space().validate(&p.config).is_ok();
        let s: usize = p.tag.split(':').nth(2).and_then(|v| v.parse().ok()).expect("hb tag");
        let b = p.fidelity.get("epochs").and_then(Value::as_f64).expect("epochs") as i64;
        *seen.entry((s, b)).or_default() += 1;
        let result = bench.evaluate(&p.config, &p.fidelity, Seed::Fixed(i as u64)).expect("eval");
        hb.tell(&Observation {
            proposal: p,
            result,
            sim_time_at_finish: 0.0,
        })
        .expect("tell");
    }
    let mut expected: BTreeMap<(usize, i64), usize> = BTreeMap::new();
    for (bracket, rungs) in schedule.brackets.iter().zip(&want) {
        for r in rungs {
            *expected.entry((bracket.s, r.1 as i64)).or_default() += r.0;
        }
    }
    outcome(
        schedule_ok && seen == expected && legal,
        format!("schedule {}, run multiset {}", if schedule_ok { "exact" } else { "differs" }, if seen == expected { "equal" } else { "differs" }),
    )
}

struct SuiteResult {
    /// per benchmark: optimizer -> (median regret at 1%, median regret at 100%)
    rows: Vec<(String, BTreeMap<String, (f64, f64)>)>,
    records: Vec<RunRecord>,
    elapsed: f64,
}

fn run_suite() -> SuiteResult {
    let start = Instant::now();
    let options = RunOptions {
        overhead: OverheadMode::Zero,
        max_evaluations: None,
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for bench in synthetic_suite().expect("suite") {
        let budget = bench.default_budget().expect("budget");
        let mut medians = BTreeMap::new();
        for name in ["rs", "hb", "de", "dehb", "kde_bo"] {
            let recs = run_repetitions(&OptimizerSpec::new(name), &bench, budget, 32, 0, &options, 4).expect("runs");
            assert!(recs.iter().all(|r| !r.failed()));
            let refs: Vec<&RunRecord> = recs.iter().collect();
            let m1 = median_regret_at(&refs, 0.01).expect("regret");
            let m100 = median_regret_at(&refs, 1.0).expect("regret");
            medians.insert(name.to_string(), (m1, m100));
            records.extend(recs);
        }
        rows.push((bench.descriptor().name.clone(), medians));
    }
    SuiteResult {
        rows,
        records,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

// NaN medians (nothing finished yet) rank as worst
fn lossy(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn criterion_7(suite: &SuiteResult) -> Outcome {
    let mut detail = Vec::new();
    let mut passed = suite.elapsed < 600.0;
    for (challenger, baseline) in [("hb", "rs"), ("dehb", "de")] {
        let wins = suite
            .rows
            .iter()
            .filter(|(_, m)| lossy(m[challenger].0) < lossy(m[baseline].0))
            .count();
        let cmp = analysis::compare_optimizers(&suite.records, baseline, &[challenger.to_string()], &[0.01], 0.05)
            .expect("comparison");
        let c = &cmp[0];
        passed &= wins >= 4 && c.p_value < 0.05;
        detail.push(format!(
            "{challenger} vs {baseline}: {wins}/5 lower medians, w/t/l {}/{}/{}, p = {:.5}",
            c.wins, c.ties, c.losses, c.p_value
        ));
    }
    detail.push(format!("{:.1}s", suite.elapsed));
    outcome(passed, detail.join("; "))
}

fn criterion_8(suite: &SuiteResult) -> Outcome {
    let mut detail = Vec::new();
    let mut passed = true;
    for challenger in ["kde_bo", "de"] {
        let ok = suite
            .rows
            .iter()
            .filter(|(_, m)| lossy(m[challenger].1) <= lossy(m["rs"].1))
            .count();
        passed &= ok >= 4;
        detail.push(format!("{challenger} <= rs on {ok}/5"));
    }
    for (name, m) in &suite.rows {
        detail.push(format!(
            "{name}: rs {:.4} de {:.4} kde_bo {:.4}",
            m["rs"].1, m["de"].1, m["kde_bo"].1
        ));
    }
    outcome(passed, detail.join("; "))
}

/// Two-sample Kolmogorov-Smirnov p-value from the asymptotic distribution.
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

fn first_rung_draws(mut opt: Box<dyn Optimizer>, n: usize, out: &mut Vec<Vec<f64>>, space: &ConfigurationSpace) {
    for _ in 0..n {
        let p = opt.ask().expect("first rung has room");
        out.push(space.to_unit_vec(&p.config).expect("legal"));
    }
}

fn criterion_9() -> Outcome {
    // density integral on interior data, midpoint quadrature
    let space = ConfigurationSpace::new(vec![HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obs: Vec<(Vec<f64>, f64)> = (0..40)
        .map(|_| {
            let x = 0.4 + 0.2 * rng.random::<f64>();
            (vec![x], (x - 0.5).abs())
        })
        .collect();
    let pair = kde_fit(&space, &obs, &KDEParams::for_dim(1)).expect("enough points");
    let steps = 100_000;
    let integral: f64 = (0..steps)
        .map(|i| pair.good.pdf(&[(i as f64 + 0.5) / steps as f64]))
        .sum::<f64>()
        / steps as f64;
    let integral_ok = (integral - 1.0).abs() <= 1e-3;

    // BOHB at random_fraction = 1 against HB on first-rung samples
    let bench = catalog::synthetic_quadratic(3).expect("builtin");
    let problem = Problem::from_benchmark(&bench);
    let hb_params = HBParams::new(3.0, 1.0, 81.0).unwrap();
    let kde = KDEParams {
        random_fraction: 1.0,
        ..KDEParams::for_dim(3)
    };
    let (mut bohb_draws, mut hb_draws) = (Vec::new(), Vec::new());
    let mut seed = 0u64;
    while bohb_draws.len() < 1000 {
        let n = (1000 - bohb_draws.len()).min(81);
        let bohb = Hyperband::bohb(problem.clone(), hb_params, kde.clone(), seed);
        first_rung_draws(Box::new(bohb), n, &mut bohb_draws, &problem.space);
        let hb = Hyperband::hb(problem.clone(), hb_params, 1_000_003 + seed);
        first_rung_draws(Box::new(hb), n, &mut hb_draws, &problem.space);
        seed += 1;
    }
    let ps: Vec<f64> = (0..3)
        .map(|j| {
            let a: Vec<f64> = bohb_draws.iter().map(|u| u[j]).collect();
            let b: Vec<f64> = hb_draws.iter().map(|u| u[j]).collect();
            ks_p_value(&a, &b)
        })
        .collect();
    let ks_ok = ps.iter().all(|&p| p > 0.01);
    outcome(
        integral_ok && ks_ok,
        format!("integral {integral:.6}, KS p-values per dimension {ps:.4?} over {} draws each", bohb_draws.len()),
    )
}

fn run_cli(out: &Path, bench: &str, optimizer: &str, seed: u64, budget: &str, jobs: usize) -> i32 {
    cli::main_with_args([
        "mfbench",
        "run",
        "--benchmark",
        bench,
        "--optimizer",
        optimizer,
        "--budget",
        budget,
        "--reps",
        "3",
        "--seed",
        &seed.to_string(),
        "--overhead",
        "zero",
        "--jobs",
        &jobs.to_string(),
        "--out",
        out.to_str().expect("utf-8 temp path"),
    ])
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let p = e.expect("entry").path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("readable"))
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let root = tempfile::tempdir().expect("tempdir");
    let benches = ["builtin:synth-quad-2d", "builtin:svm", "builtin:synth-quad-4d"];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = Vec::new();
    let mut n = 0;
    for (i, opt) in mfbench::optimizers::OPTIMIZER_NAMES.iter().enumerate() {
        for bench in benches {
            let seed: u64 = rng.random_range(0..1000);
            let budget = ["auto", "250", "1000"][(i + n) % 3];
            let dirs: Vec<_> = [(1, "a"), (1, "b"), (8, "c")]
                .iter()
                .map(|&(jobs, tag)| {
                    let d = root.path().join(format!("{n}{tag}"));
                    let code = run_cli(&d, bench, opt, seed, budget, jobs);
                    (code, d)
                })
                .collect();
            n += 1;
            if dirs.iter().any(|(c, _)| *c != 0) {
                bad.push(format!("{opt} on {bench}: nonzero exit"));
                continue;
            }
            let first = dir_bytes(&dirs[0].1);
            if dirs[1..].iter().any(|(_, d)| dir_bytes(d) != first) {
                bad.push(format!("{opt} on {bench} seed {seed} budget {budget}"));
            }
        }
    }
    outcome(bad.is_empty(), format!("{n} quadruples x 3 executions, differing: {bad:?}"))
}

fn main() {
    let suite = run_suite();
    let results = [
        ("1 sign-test golden p-values", criterion_1()),
        ("2 Bonferroni flags", criterion_2()),
        ("3 trajectory rules", criterion_3()),
        ("4 grid counts", criterion_4()),
        ("5 tabular round-trip", criterion_5()),
        ("6 Hyperband schedule", criterion_6()),
        ("7 multi-fidelity wins at 1% budget", criterion_7(&suite)),
        ("8 black-box optimizers vs random search", criterion_8(&suite)),
        ("9 KDE sanity", criterion_9()),
        ("10 determinism", criterion_10()),
    ];
    let mut failed = Vec::new();
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

