//! Random search, with and without median stopping.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hyperband::{hb_schedule, HBParams};
use super::{Observation, Optimizer, OptimizerError, Problem, Proposal};
use crate::configspace::{Configuration, FidelityPoint};

/// Uniform sampling at maximum fidelity.
pub struct RandomSearch {
    problem: Problem,
    rng: ChaCha8Rng,
    asked: usize,
}

impl RandomSearch {
    pub fn new(problem: Problem, seed: u64) -> Self {
        Self {
            problem,
            rng: ChaCha8Rng::seed_from_u64(seed),
            asked: 0,
        }
    }
}

impl Optimizer for RandomSearch {
    fn name(&self) -> &'static str {
        "rs"
    }

    fn params(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    fn ask(&mut self) -> Option<Proposal> {
        let config = self.problem.space.sample(&mut self.rng);
        self.asked += 1;
        Some(Proposal {
            config,
            fidelity: self.problem.max_fidelity(),
            tag: format!("rs:{}", self.asked - 1),
        })
    }

    fn tell(&mut self, _observation: &Observation) -> Result<(), OptimizerError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneDecision {
    Continue,
    Stop,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Stop iff the candidate's best intermediate loss is strictly worse than
/// the median of its peers at the same fidelity. No peers means continue.
pub fn median_prune(peers: &[f64], candidate_best: f64) -> PruneDecision {
    if !peers.is_empty() && candidate_best > median(peers) {
        PruneDecision::Stop
    } else {
        PruneDecision::Continue
    }
}

/// Random search stepping each configuration up the Hyperband fidelity
/// levels, stopped early by [`median_prune`].
pub struct RandomSearchMedian {
    problem: Problem,
    params: HBParams,
    rng: ChaCha8Rng,
    levels: Vec<FidelityPoint>,
    history: Vec<Vec<f64>>,
    current: Option<(Configuration, usize, f64)>,
    pending: Option<Proposal>,
    started: usize,
}

impl RandomSearchMedian {
    pub fn new(problem: Problem, params: HBParams, seed: u64) -> Self {
        let mut levels: Vec<FidelityPoint> = Vec::new();
        for b in hb_schedule(&params).levels {
            let p = problem.fidelity_space.with_primary(b);
            if levels.last() != Some(&p) {
                levels.push(p);
            }
        }
        Self {
            history: vec![Vec::new(); levels.len()],
            levels,
            problem,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: None,
            pending: None,
            started: 0,
        }
    }

    pub fn levels(&self) -> &[FidelityPoint] {
        &self.levels
    }
}

impl Optimizer for RandomSearchMedian {
    fn name(&self) -> &'static str {
        "rs_median"
    }

    fn params(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("eta".into(), self.params.eta.to_string());
        out.insert("b_min".into(), self.params.b_min.to_string());
        out.insert("b_max".into(), self.params.b_max.to_string());
        out
    }

    fn ask(&mut self) -> Option<Proposal> {
        if self.pending.is_some() {
            return None;
        }
        if self.current.is_none() {
            let c = self.problem.space.sample(&mut self.rng);
            self.current = Some((c, 0, f64::INFINITY));
            self.started += 1;
        }
        let (config, level, _) = self.current.as_ref().expect("set");
        let p = Proposal {
            config: config.clone(),
            fidelity: self.levels[*level].clone(),
            tag: format!("md:{}:{level}", self.started - 1),
        };
        self.pending = Some(p.clone());
        Some(p)
    }

    fn tell(&mut self, observation: &Observation) -> Result<(), OptimizerError> {
        if self.pending.as_ref() != Some(&observation.proposal) {
            return Err(OptimizerError::UnknownProposal);
        }
        self.pending = None;
        let (config, level, best) = self.current.take().expect("pending implies current");
        let loss = observation.loss();
        let best = best.min(loss);
        let decision = median_prune(&self.history[level], best);
        self.history[level].push(loss);
        if decision == PruneDecision::Continue && level + 1 < self.levels.len() {
            self.current = Some((config, level + 1, best));
        }
        Ok(())
    }
}
