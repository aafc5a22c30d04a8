//! DEHB's sampler: one DE subpopulation per Hyperband fidelity level.
//!
//! The first bracket is plain Hyperband and its evaluations seed the
//! subpopulations (rung `r` of the first bracket fills level `r`). Every
//! later rung is produced by DE over its level's subpopulation, with the
//! mutation parents drawn from that subpopulation plus the elites of the
//! level below. Parent pools too small for rand/1 are padded from the best
//! members of the global population.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha8Rng;

use super::de::{binomial_crossover, pick_three, rand1_mutant};
use super::hyperband::{HbSchedule, RungPosition, RungSampler};
use super::{DEParams, Observation, Problem};
use crate::configspace::{Configuration, FidelityPoint};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Subpopulation {
    pub vectors: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub capacity: usize,
    cursor: usize,
}

impl Subpopulation {
    /// Indices of the best `ceil(n / 3)` members.
    fn elites(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.vectors.len()).collect();
        idx.sort_by(|&a, &b| self.losses[a].total_cmp(&self.losses[b]).then(a.cmp(&b)));
        idx.truncate(self.vectors.len().div_ceil(3));
        idx
    }
}

struct Trial {
    level: usize,
    target: usize,
    vector: Vec<f64>,
}

pub struct DehbSampler {
    problem: Problem,
    de: DEParams,
    subpops: Vec<Subpopulation>,
    trials: HashMap<(usize, usize, usize), Trial>,
}

impl DehbSampler {
    pub fn new(problem: Problem, schedule: &HbSchedule, de: DEParams) -> Self {
        let subpops = schedule.brackets[0]
            .rungs
            .iter()
            .map(|r| Subpopulation {
                capacity: r.n_configs,
                ..Default::default()
            })
            .collect();
        Self {
            problem,
            de,
            subpops,
            trials: HashMap::new(),
        }
    }

    pub fn subpopulations(&self) -> &[Subpopulation] {
        &self.subpops
    }

    fn parent_pool(&self, level: usize, target: usize) -> Vec<Vec<f64>> {
        let own = &self.subpops[level];
        let mut pool: Vec<Vec<f64>> = own
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, v)| v.clone())
            .collect();
        if level > 0 {
            let lower = &self.subpops[level - 1];
            pool.extend(lower.elites().into_iter().map(|i| lower.vectors[i].clone()));
        }
        if pool.len() < 3 {
            let mut global: Vec<(f64, &Vec<f64>)> = self
                .subpops
                .iter()
                .flat_map(|s| s.losses.iter().copied().zip(&s.vectors))
                .collect();
            global.sort_by(|a, b| a.0.total_cmp(&b.0));
            let target_vec = &own.vectors[target];
            for (_, v) in global {
                if pool.len() >= 3 {
                    break;
                }
                if v != target_vec && !pool.contains(v) {
                    pool.push(v.clone());
                }
            }
        }
        pool
    }
}

impl RungSampler for DehbSampler {
    fn name(&self) -> &'static str {
        "dehb"
    }

    fn params(&self, out: &mut BTreeMap<String, String>) {
        self.de.describe(out);
    }

    fn propose(
        &mut self,
        at: RungPosition,
        slot: usize,
        _fidelity: &FidelityPoint,
        promoted: &[Configuration],
        rng: &mut ChaCha8Rng,
    ) -> Configuration {
        if at.iteration == 0 {
            return if at.rung == 0 {
                self.problem.space.sample(rng)
            } else {
                promoted[slot].clone()
            };
        }
        let sub = &self.subpops[at.level];
        if sub.vectors.is_empty() {
            return self.problem.space.sample(rng);
        }
        let target = sub.cursor % sub.vectors.len();
        self.subpops[at.level].cursor += 1;
        let pool = self.parent_pool(at.level, target);
        let Ok([a, b, c]) = pick_three(pool.len(), None, rng) else {
            return self.problem.space.sample(rng);
        };
        let mutant = rand1_mutant(&pool[a], &pool[b], &pool[c], self.de.f);
        let target_vec = &self.subpops[at.level].vectors[target];
        let vector = binomial_crossover(target_vec, &mutant, self.de.cr, rng);
        let config = self.problem.space.from_unit_vec_clipped(&vector);
        self.trials.insert(
            (at.iteration, at.rung, slot),
            Trial {
                level: at.level,
                target,
                vector,
            },
        );
        config
    }

    fn observe(&mut self, at: RungPosition, slot: usize, obs: &Observation) {
        let loss = obs.loss();
        if at.iteration == 0 {
            let sub = &mut self.subpops[at.level];
            if sub.vectors.len() < sub.capacity {
                let u = self
                    .problem
                    .space
                    .to_unit_vec(&obs.proposal.config)
                    .expect("proposals are legal");
                sub.vectors.push(u);
                sub.losses.push(loss);
            }
            return;
        }
        if let Some(t) = self.trials.remove(&(at.iteration, at.rung, slot)) {
            let sub = &mut self.subpops[t.level];
            if loss <= sub.losses[t.target] {
                sub.vectors[t.target] = t.vector;
                sub.losses[t.target] = loss;
            }
        }
    }
}
