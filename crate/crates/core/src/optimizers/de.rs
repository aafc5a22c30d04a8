//! Differential evolution (rand/1/bin) in the unit cube.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_param, unknown, Observation, Optimizer, OptimizerError, ParamOverrides, Problem, Proposal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DEParams {
    /// Mutation factor, in `(0, 2]`.
    pub f: f64,
    /// Crossover rate, in `[0, 1]`.
    pub cr: f64,
    /// Population size, at least 4.
    pub np: usize,
}

impl Default for DEParams {
    fn default() -> Self {
        Self { f: 0.5, cr: 0.5, np: 20 }
    }
}

impl DEParams {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |key: &str, value: String, reason: &str| OptimizerError::InvalidParam {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        if !(self.f > 0.0 && self.f <= 2.0) {
            return Err(bad("f", self.f.to_string(), "must be in (0, 2]"));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(bad("cr", self.cr.to_string(), "must be in [0, 1]"));
        }
        if self.np < 4 {
            return Err(OptimizerError::PopulationTooSmall(self.np));
        }
        Ok(())
    }

    pub fn from_overrides(optimizer: &str, overrides: &ParamOverrides) -> Result<Self, OptimizerError> {
        let mut p = Self::default();
        for (k, v) in overrides {
            match k.as_str() {
                "f" => p.f = parse_param(k, v)?,
                "cr" => p.cr = parse_param(k, v)?,
                "np" => p.np = parse_param(k, v)?,
                _ => return Err(unknown(optimizer, k)),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn describe(&self, out: &mut BTreeMap<String, String>) {
        out.insert("f".into(), self.f.to_string());
        out.insert("cr".into(), self.cr.to_string());
    }
}

/// `a + F (b - c)`, clipped to the unit cube.
pub fn rand1_mutant(a: &[f64], b: &[f64], c: &[f64], f: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((a, b), c)| (a + f * (b - c)).clamp(0.0, 1.0))
        .collect()
}

/// Binomial crossover; coordinate `j_rand` always comes from the mutant.
pub fn binomial_crossover<R: Rng + ?Sized>(target: &[f64], mutant: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    let j_rand = rng.random_range(0..target.len().max(1));
    target
        .iter()
        .zip(mutant)
        .enumerate()
        .map(|(j, (t, m))| {
            let take = rng.random::<f64>() < cr;
            if take || j == j_rand {
                *m
            } else {
                *t
            }
        })
        .collect()
}

/// Three distinct indices into `0..n`, none equal to `exclude`.
pub fn pick_three<R: Rng + ?Sized>(n: usize, exclude: Option<usize>, rng: &mut R) -> Result<[usize; 3], OptimizerError> {
    let available = n - exclude.map_or(0, |e| usize::from(e < n));
    if available < 3 {
        return Err(OptimizerError::PopulationTooSmall(n));
    }
    let picked = sample_indices(rng, available, 3);
    let mut out = [0; 3];
    for (o, i) in out.iter_mut().zip(picked.iter()) {
        *o = match exclude {
            Some(e) if i >= e => i + 1,
            _ => i,
        };
    }
    Ok(out)
}

/// The trial vector for `population[target]`.
pub fn de_offspring<R: Rng + ?Sized>(
    population: &[Vec<f64>],
    target: usize,
    params: &DEParams,
    rng: &mut R,
) -> Result<Vec<f64>, OptimizerError> {
    let [a, b, c] = pick_three(population.len(), Some(target), rng)?;
    let mutant = rand1_mutant(&population[a], &population[b], &population[c], params.f);
    Ok(binomial_crossover(&population[target], &mutant, params.cr, rng))
}

/// One synchronous generation: every member produces a trial, then each
/// trial replaces its parent when it is no worse.
pub fn de_step<R: Rng + ?Sized, F: FnMut(&[f64]) -> f64>(
    population: &[Vec<f64>],
    losses: &[f64],
    params: &DEParams,
    rng: &mut R,
    mut objective: F,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), OptimizerError> {
    if population.len() < 4 {
        return Err(OptimizerError::PopulationTooSmall(population.len()));
    }
    let trials = (0..population.len())
        .map(|i| de_offspring(population, i, params, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pop = population.to_vec();
    let mut fit = losses.to_vec();
    for (i, t) in trials.into_iter().enumerate() {
        let l = objective(&t);
        if l <= fit[i] {
            pop[i] = t;
            fit[i] = l;
        }
    }
    Ok((pop, fit))
}

/// DE at maximum fidelity. The initial population is sampled uniformly and
/// each later generation is proposed as a batch of `np` trials.
pub struct DifferentialEvolution {
    problem: Problem,
    params: DEParams,
    rng: ChaCha8Rng,
    population: Vec<Vec<f64>>,
    losses: Vec<f64>,
    trials: Vec<Vec<f64>>,
    trial_losses: Vec<Option<f64>>,
    next: usize,
    generation: usize,
    pending: Option<(Proposal, usize)>,
}

impl DifferentialEvolution {
    pub fn new(problem: Problem, params: DEParams, seed: u64) -> Result<Self, OptimizerError> {
        params.validate()?;
        Ok(Self {
            problem,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            population: Vec::new(),
            losses: Vec::new(),
            trials: Vec::new(),
            trial_losses: Vec::new(),
            next: 0,
            generation: 0,
            pending: None,
        })
    }

    pub fn population(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.population, &self.losses)
    }

    fn start_generation(&mut self) {
        let mut trials = Vec::with_capacity(self.population.len());
        for i in 0..self.population.len() {
            trials.push(de_offspring(&self.population, i, &self.params, &mut self.rng).expect("np >= 4"));
        }
        self.trial_losses = vec![None; trials.len()];
        self.trials = trials;
        self.next = 0;
        self.generation += 1;
    }
}

impl Optimizer for DifferentialEvolution {
    fn name(&self) -> &'static str {
        "de"
    }

    fn params(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        self.params.describe(&mut out);
        out.insert("np".into(), self.params.np.to_string());
        out
    }

    fn ask(&mut self) -> Option<Proposal> {
        if self.pending.is_some() {
            return None;
        }
        let initializing = self.generation == 0;
        let (config, slot) = if initializing {
            if self.next >= self.params.np {
                return None;
            }
            (self.problem.space.sample(&mut self.rng), self.next)
        } else {
            if self.next >= self.trials.len() {
                return None;
            }
            (self.problem.space.from_unit_vec_clipped(&self.trials[self.next]), self.next)
        };
        self.next += 1;
        let proposal = Proposal {
            config,
            fidelity: self.problem.max_fidelity(),
            tag: format!("de:{}:{slot}", self.generation),
        };
        self.pending = Some((proposal.clone(), slot));
        Some(proposal)
    }

    fn tell(&mut self, observation: &Observation) -> Result<(), OptimizerError> {
        let (proposal, slot) = self.pending.take().ok_or(OptimizerError::UnknownProposal)?;
        if proposal != observation.proposal {
            self.pending = Some((proposal, slot));
            return Err(OptimizerError::UnknownProposal);
        }
        let loss = observation.loss();
        if self.generation == 0 {
            let u = self
                .problem
                .space
                .to_unit_vec(&proposal.config)
                .expect("sampled configuration is legal");
            self.population.push(u);
            self.losses.push(loss);
            if self.population.len() == self.params.np {
                self.start_generation();
            }
        } else {
            self.trial_losses[slot] = Some(loss);
            if self.next == self.trials.len() && self.trial_losses.iter().all(Option::is_some) {
                for (i, l) in self.trial_losses.iter().enumerate() {
                    let l = l.expect("checked");
                    if l <= self.losses[i] {
                        self.population[i] = self.trials[i].clone();
                        self.losses[i] = l;
                    }
                }
                self.start_generation();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn mutant_and_clipping() {
        let m = rand1_mutant(&[0.2], &[0.6], &[0.4], 0.5);
        assert!((m[0] - 0.3).abs() < 1e-15);
        assert_eq!(rand1_mutant(&[0.9], &[1.0], &[0.2], 0.5), vec![1.0]);
        assert_eq!(rand1_mutant(&[0.1], &[0.0], &[0.8], 0.5), vec![0.0]);
    }

    #[test]
    fn crossover_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = [0.1, 0.2, 0.3];
        let m = [0.7, 0.8, 0.9];
        assert_eq!(binomial_crossover(&t, &m, 1.0, &mut rng), m.to_vec());
        let one = binomial_crossover(&t, &m, 0.0, &mut rng);
        assert_eq!(one.iter().zip(&m).filter(|(a, b)| a == b).count(), 1);
    }

    #[test]
    fn pick_three_excludes_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let [a, b, c] = pick_three(4, Some(2), &mut rng).unwrap();
            assert!(a != b && b != c && a != c);
            assert!(![a, b, c].contains(&2) && [a, b, c].iter().all(|&x| x < 4));
        }
        assert!(pick_three(3, Some(0), &mut rng).is_err());
        assert!(pick_three(3, None, &mut rng).is_ok());
    }

    #[test]
    fn small_population_rejected() {
        let p = DEParams { np: 3, ..Default::default() };
        assert_eq!(p.validate(), Err(OptimizerError::PopulationTooSmall(3)));
    }

    #[test]
    fn identical_population_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pop = vec![vec![0.3, 0.7]; 6];
        let (next, _) = de_step(&pop, &[1.0; 6], &DEParams::default(), &mut rng, |_| 0.0).unwrap();
        assert_eq!(next, pop);
    }

    proptest! {
        #[test]
        fn selection_never_worsens(seed in 0u64..1000, np in 4usize..12, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pop: Vec<Vec<f64>> = (0..np).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
            let obj = |x: &[f64]| x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>();
            let losses: Vec<f64> = pop.iter().map(|x| obj(x)).collect();
            let (next, fit) = de_step(&pop, &losses, &DEParams::default(), &mut rng, obj).unwrap();
            for i in 0..np {
                prop_assert!(fit[i] <= losses[i]);
                prop_assert!(next[i].iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
