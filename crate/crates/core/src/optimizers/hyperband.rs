//! Successive halving and the Hyperband bracket driver.
//!
//! The driver owns the schedule and the promotion logic. What gets
//! evaluated on each rung is delegated to a [`RungSampler`]: random
//! sampling gives plain Hyperband, KDE sampling gives BOHB and per-level DE
//! subpopulations give DEHB.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kde::{KDEParams, KdeSampler};
use super::{dehb::DehbSampler, DEParams};
use super::{parse_param, unknown, Observation, Optimizer, OptimizerError, ParamOverrides, Problem, Proposal};
use crate::configspace::{Configuration, FidelityPoint};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBParams {
    pub eta: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl HBParams {
    pub fn new(eta: f64, b_min: f64, b_max: f64) -> Result<Self, OptimizerError> {
        let bad = |key: &str, value: f64, reason: &str| OptimizerError::InvalidParam {
            key: key.into(),
            value: value.to_string(),
            reason: reason.into(),
        };
        if !(eta >= 2.0) || !eta.is_finite() {
            return Err(bad("eta", eta, "must be at least 2"));
        }
        if !(b_min > 0.0) {
            return Err(bad("b_min", b_min, "must be positive"));
        }
        if !(b_max >= b_min) || !b_max.is_finite() {
            return Err(bad("b_max", b_max, "must be at least b_min"));
        }
        Ok(Self { eta, b_min, b_max })
    }

    /// Budgets from the primary fidelity of `problem`, with an optional
    /// `eta` override.
    pub fn for_problem(problem: &Problem, overrides: &ParamOverrides, optimizer: &str) -> Result<Self, OptimizerError> {
        let primary = problem.fidelity_space.primary();
        let lo = primary.min_value().as_f64().expect("fidelities are numeric");
        let hi = primary.max_value().as_f64().expect("fidelities are numeric");
        let mut eta = 3.0;
        for (k, v) in overrides {
            match k.as_str() {
                "eta" => eta = parse_param(k, v)?,
                _ => return Err(unknown(optimizer, k)),
            }
        }
        Self::new(eta, lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    pub n_configs: usize,
    pub fidelity: f64,
    /// Index into [`HbSchedule::levels`].
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub s: usize,
    pub rungs: Vec<Rung>,
}

impl Bracket {
    pub fn total_budget(&self) -> f64 {
        self.rungs.iter().map(|r| r.n_configs as f64 * r.fidelity).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbSchedule {
    pub eta: f64,
    pub s_max: usize,
    /// Brackets in execution order, `s = s_max` first.
    pub brackets: Vec<Bracket>,
    /// Fidelity of each level, lowest first; level `s_max` is `b_max`.
    pub levels: Vec<f64>,
    /// Set when `b_max / b_min < eta`: a single rung at `b_max`.
    pub degenerate: bool,
}

pub fn hb_schedule(params: &HBParams) -> HbSchedule {
    let eta = params.eta;
    let ratio = params.b_max / params.b_min;
    let s_max = (ratio.ln() / eta.ln() + EPS).floor().max(0.0) as usize;
    let levels: Vec<f64> = (0..=s_max)
        .map(|l| params.b_max / eta.powi((s_max - l) as i32))
        .collect();
    let brackets = (0..=s_max)
        .rev()
        .map(|s| {
            let mut n = ((s_max + 1) as f64 / (s + 1) as f64 * eta.powi(s as i32) - EPS).ceil() as usize;
            let mut rungs = Vec::with_capacity(s + 1);
            for r in 0..=s {
                let level = s_max - s + r;
                rungs.push(Rung {
                    n_configs: n,
                    fidelity: levels[level],
                    level,
                });
                n = ((n as f64 / eta + EPS).floor() as usize).max(1);
            }
            Bracket { s, rungs }
        })
        .collect();
    HbSchedule {
        eta,
        s_max,
        brackets,
        levels,
        degenerate: ratio < eta,
    }
}

/// Indices of the `k` lowest losses, best first; ties keep the earlier
/// observation.
pub fn top_k(losses: &[Option<f64>], k: usize) -> Result<Vec<usize>, OptimizerError> {
    let missing = losses.iter().filter(|l| l.is_none()).count();
    if missing > 0 {
        return Err(OptimizerError::IncompleteRung {
            missing,
            total: losses.len(),
        });
    }
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[a].unwrap().total_cmp(&losses[b].unwrap()).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Successive-halving promotion: the best `max(1, floor(n / eta))` of a
/// complete rung.
pub fn sh_advance(losses: &[Option<f64>], eta: f64) -> Result<Vec<usize>, OptimizerError> {
    let k = ((losses.len() as f64 / eta + EPS).floor() as usize).max(1).min(losses.len());
    top_k(losses, k)
}

/// Where in the schedule a rung sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RungPosition {
    /// Number of brackets started before this one.
    pub iteration: usize,
    pub s: usize,
    pub rung: usize,
    pub level: usize,
}

pub trait RungSampler: Send {
    fn name(&self) -> &'static str;

    fn params(&self, _out: &mut BTreeMap<String, String>) {}

    /// Configuration for one slot of a rung, drawn when the slot is asked.
    /// `promoted` holds the successive-halving survivors of the previous
    /// rung, best first (empty on rung 0).
    fn propose(
        &mut self,
        at: RungPosition,
        slot: usize,
        fidelity: &FidelityPoint,
        promoted: &[Configuration],
        rng: &mut ChaCha8Rng,
    ) -> Configuration;

    fn observe(&mut self, _at: RungPosition, _slot: usize, _obs: &Observation) {}
}

/// Uniform sampling on the first rung, promotion afterwards.
pub struct RandomSampler {
    problem: Problem,
}

impl RungSampler for RandomSampler {
    fn name(&self) -> &'static str {
        "hb"
    }

    fn propose(
        &mut self,
        at: RungPosition,
        slot: usize,
        _fidelity: &FidelityPoint,
        promoted: &[Configuration],
        rng: &mut ChaCha8Rng,
    ) -> Configuration {
        if at.rung == 0 {
            self.problem.space.sample(rng)
        } else {
            promoted[slot].clone()
        }
    }
}

pub struct Hyperband<S> {
    problem: Problem,
    params: HBParams,
    schedule: HbSchedule,
    level_points: Vec<FidelityPoint>,
    sampler: S,
    rng: ChaCha8Rng,
    position: Option<RungPosition>,
    n_configs: usize,
    promoted: Vec<Configuration>,
    configs: Vec<Configuration>,
    losses: Vec<Option<f64>>,
    pending: Vec<(Proposal, usize)>,
}

impl Hyperband<RandomSampler> {
    pub fn hb(problem: Problem, params: HBParams, seed: u64) -> Self {
        let sampler = RandomSampler { problem: problem.clone() };
        Self::with_sampler(problem, params, sampler, seed)
    }
}

impl Hyperband<KdeSampler> {
    pub fn bohb(problem: Problem, params: HBParams, kde: KDEParams, seed: u64) -> Self {
        let sampler = KdeSampler::new(problem.clone(), kde);
        Self::with_sampler(problem, params, sampler, seed)
    }
}

impl Hyperband<DehbSampler> {
    pub fn dehb(problem: Problem, params: HBParams, de: DEParams, seed: u64) -> Self {
        let schedule = hb_schedule(&params);
        let sampler = DehbSampler::new(problem.clone(), &schedule, de);
        Self::with_sampler(problem, params, sampler, seed)
    }
}

impl<S: RungSampler> Hyperband<S> {
    pub fn with_sampler(problem: Problem, params: HBParams, sampler: S, seed: u64) -> Self {
        let schedule = hb_schedule(&params);
        let level_points = schedule
            .levels
            .iter()
            .map(|&b| problem.fidelity_space.with_primary(b))
            .collect();
        Self {
            problem,
            params,
            schedule,
            level_points,
            sampler,
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: None,
            n_configs: 0,
            promoted: Vec::new(),
            configs: Vec::new(),
            losses: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn schedule(&self) -> &HbSchedule {
        &self.schedule
    }

    pub fn sampler(&self) -> &S {
        &self.sampler
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    fn bracket_of(&self, iteration: usize) -> &Bracket {
        &self.schedule.brackets[iteration % self.schedule.brackets.len()]
    }

    fn enter(&mut self, at: RungPosition, promoted: Vec<Configuration>) {
        self.n_configs = self.bracket_of(at.iteration).rungs[at.rung].n_configs;
        self.losses = vec![None; self.n_configs];
        self.configs.clear();
        self.promoted = promoted;
        self.position = Some(at);
    }

    fn start_bracket(&mut self, iteration: usize) {
        let b = self.bracket_of(iteration);
        let at = RungPosition {
            iteration,
            s: b.s,
            rung: 0,
            level: b.rungs[0].level,
        };
        self.enter(at, Vec::new());
    }

    fn advance(&mut self) {
        let at = self.position.expect("started");
        let bracket = self.bracket_of(at.iteration).clone();
        if at.rung + 1 < bracket.rungs.len() {
            let next = &bracket.rungs[at.rung + 1];
            let keep = top_k(&self.losses, next.n_configs).expect("rung complete");
            let promoted = keep.iter().map(|&i| self.configs[i].clone()).collect();
            let pos = RungPosition {
                iteration: at.iteration,
                s: at.s,
                rung: at.rung + 1,
                level: next.level,
            };
            self.enter(pos, promoted);
        } else {
            self.start_bracket(at.iteration + 1);
        }
    }
}

impl<S: RungSampler> Optimizer for Hyperband<S> {
    fn name(&self) -> &'static str {
        self.sampler.name()
    }

    fn params(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("eta".into(), self.params.eta.to_string());
        out.insert("b_min".into(), self.params.b_min.to_string());
        out.insert("b_max".into(), self.params.b_max.to_string());
        self.sampler.params(&mut out);
        out
    }

    /// Proposals of one rung may be outstanding together; the next rung
    /// starts only once every result of the current one is in.
    fn ask(&mut self) -> Option<Proposal> {
        match self.position {
            None => self.start_bracket(0),
            Some(_) if self.configs.len() >= self.n_configs => {
                if !self.pending.is_empty() {
                    return None;
                }
                self.advance();
            }
            Some(_) => {}
        }
        let at = self.position.expect("started");
        let slot = self.configs.len();
        let fidelity = self.level_points[at.level].clone();
        let config = self.sampler.propose(at, slot, &fidelity, &self.promoted, &mut self.rng);
        self.configs.push(config.clone());
        let proposal = Proposal {
            config,
            fidelity,
            tag: format!("hb:{}:{}:{}:{slot}", at.iteration, at.s, at.rung),
        };
        self.pending.push((proposal.clone(), slot));
        Some(proposal)
    }

    fn tell(&mut self, observation: &Observation) -> Result<(), OptimizerError> {
        let i = self
            .pending
            .iter()
            .position(|(p, _)| *p == observation.proposal)
            .ok_or(OptimizerError::UnknownProposal)?;
        let (_, slot) = self.pending.remove(i);
        let at = self.position.expect("started");
        self.losses[slot] = Some(observation.loss());
        self.sampler.observe(at, slot, observation);
        Ok(())
    }
}
