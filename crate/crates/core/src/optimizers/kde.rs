//! Density-ratio Bayesian optimization with factorized kernel density
//! estimators in the unit cube.
//!
//! Numeric dimensions use Gaussian kernels truncated to `[0, 1]` (no
//! renormalization of the mass lost at the edges). Categorical dimensions
//! use a discrete kernel that keeps weight `1 - w` on the observed choice
//! and spreads `w` over the others, scaled by `k` so it is a density over
//! the bucket encoding.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::hyperband::{RungPosition, RungSampler};
use super::{parse_param, unknown, Observation, Optimizer, OptimizerError, ParamOverrides, Problem, Proposal};
use crate::configspace::{Configuration, ConfigurationSpace, Domain, FidelityPoint};

const BAD_FLOOR: f64 = 1e-32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KDEParams {
    pub gamma: f64,
    pub min_points_per_model: usize,
    pub bandwidth_floor: f64,
    pub bandwidth_factor: f64,
    pub random_fraction: f64,
    pub n_candidates: usize,
}

impl KDEParams {
    /// Defaults for a `dim`-dimensional space.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            gamma: 0.15,
            min_points_per_model: dim + 1,
            bandwidth_floor: 1e-3,
            bandwidth_factor: 3.0,
            random_fraction: 1.0 / 3.0,
            n_candidates: 64,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(OptimizerError::InvalidParam {
                key: key.into(),
                value,
                reason: reason.into(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", self.gamma.to_string(), "must be in (0, 1)");
        }
        if self.min_points_per_model < 1 {
            return bad("min_points_per_model", "0".into(), "must be at least 1");
        }
        if self.n_candidates < 1 {
            return bad("n_candidates", "0".into(), "must be at least 1");
        }
        if !(self.bandwidth_floor > 0.0) {
            return bad("bandwidth_floor", self.bandwidth_floor.to_string(), "must be positive");
        }
        if !(self.bandwidth_factor > 0.0) {
            return bad("bandwidth_factor", self.bandwidth_factor.to_string(), "must be positive");
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return bad("random_fraction", self.random_fraction.to_string(), "must be in [0, 1]");
        }
        Ok(())
    }

    pub fn from_overrides(optimizer: &str, overrides: &ParamOverrides, dim: usize) -> Result<Self, OptimizerError> {
        let mut p = Self::for_dim(dim);
        for (k, v) in overrides {
            match k.as_str() {
                "gamma" => p.gamma = parse_param(k, v)?,
                "min_points_per_model" => p.min_points_per_model = parse_param(k, v)?,
                "bandwidth_floor" => p.bandwidth_floor = parse_param(k, v)?,
                "bandwidth_factor" => p.bandwidth_factor = parse_param(k, v)?,
                "random_fraction" => p.random_fraction = parse_param(k, v)?,
                "n_candidates" => p.n_candidates = parse_param(k, v)?,
                _ => return Err(unknown(optimizer, k)),
            }
        }
        p.validate()?;
        Ok(p)
    }

    fn describe(&self, out: &mut BTreeMap<String, String>) {
        out.insert("gamma".into(), self.gamma.to_string());
        out.insert("min_points_per_model".into(), self.min_points_per_model.to_string());
        out.insert("bandwidth_floor".into(), self.bandwidth_floor.to_string());
        out.insert("bandwidth_factor".into(), self.bandwidth_factor.to_string());
        out.insert("random_fraction".into(), self.random_fraction.to_string());
        out.insert("n_candidates".into(), self.n_candidates.to_string());
    }

    /// Size of the good set for `n` observations.
    pub fn n_good(&self, n: usize) -> usize {
        self.min_points_per_model
            .max((self.gamma * n as f64).floor() as usize)
            .min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    Gaussian,
    Discrete(usize),
}

fn kernels(space: &ConfigurationSpace) -> Vec<Kernel> {
    space
        .params()
        .iter()
        .map(|p| match p.domain() {
            Domain::Categorical { choices } => Kernel::Discrete(choices.len()),
            _ => Kernel::Gaussian,
        })
        .collect()
}

fn bucket(u: f64, k: usize) -> usize {
    ((u * k as f64).floor() as usize).min(k - 1)
}

/// Product-kernel density over unit-encoded points.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    kernels: Vec<Kernel>,
    points: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

impl Kde {
    fn fit(kernels: Vec<Kernel>, points: Vec<Vec<f64>>, floor: f64) -> Self {
        let n = points.len() as f64;
        let d = kernels.len();
        let scott = n.powf(-1.0 / (d as f64 + 4.0));
        let bandwidths = kernels
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = if points.len() > 1 {
                    points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let h = (var.sqrt() * scott).max(floor);
                match k {
                    Kernel::Gaussian => h,
                    Kernel::Discrete(c) => h.min((*c as f64 - 1.0) / *c as f64),
                }
            })
            .collect();
        Self {
            kernels,
            points,
            bandwidths,
        }
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for p in &self.points {
            let mut prod = 1.0;
            for (j, k) in self.kernels.iter().enumerate() {
                let h = self.bandwidths[j];
                prod *= match *k {
                    Kernel::Gaussian => {
                        if !(0.0..=1.0).contains(&x[j]) {
                            0.0
                        } else {
                            let z = (x[j] - p[j]) / h;
                            inv_sqrt_2pi * (-0.5 * z * z).exp() / h
                        }
                    }
                    Kernel::Discrete(c) => {
                        let mass = if c == 1 {
                            1.0
                        } else if bucket(x[j], c) == bucket(p[j], c) {
                            1.0 - h
                        } else {
                            h / (c as f64 - 1.0)
                        };
                        mass * c as f64
                    }
                };
            }
            total += prod;
        }
        total / self.points.len() as f64
    }

    /// A point drawn around a random datapoint, kernel widths scaled by
    /// `factor`.
    pub fn sample_near<R: Rng + ?Sized>(&self, factor: f64, rng: &mut R) -> Vec<f64> {
        let center = &self.points[rng.random_range(0..self.points.len())];
        self.kernels
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let h = self.bandwidths[j] * factor;
                match *k {
                    Kernel::Gaussian => {
                        let normal = Normal::new(center[j], h).expect("positive bandwidth");
                        for _ in 0..32 {
                            let v = normal.sample(rng);
                            if (0.0..=1.0).contains(&v) {
                                return v;
                            }
                        }
                        center[j].clamp(0.0, 1.0)
                    }
                    Kernel::Discrete(c) => {
                        let idx = if rng.random::<f64>() < 1.0 - h.min(1.0) {
                            bucket(center[j], c)
                        } else {
                            rng.random_range(0..c)
                        };
                        (idx as f64 + 0.5) / c as f64
                    }
                }
            })
            .collect()
    }
}

/// Good and bad densities. An empty bad set is modelled as uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub good: Kde,
    pub bad: Option<Kde>,
}

impl DensityPair {
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let bad = self.bad.as_ref().map_or(1.0, |b| b.pdf(x));
        self.good.pdf(x) / bad.max(BAD_FLOOR)
    }
}

/// Splits unit-space observations at the `gamma` quantile of the loss and
/// fits both densities.
pub fn kde_fit(
    space: &ConfigurationSpace,
    observations: &[(Vec<f64>, f64)],
    params: &KDEParams,
) -> Result<DensityPair, OptimizerError> {
    let n = observations.len();
    if n < params.min_points_per_model {
        return Err(OptimizerError::NotEnoughObservations {
            needed: params.min_points_per_model,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| observations[a].1.total_cmp(&observations[b].1).then(a.cmp(&b)));
    let n_good = params.n_good(n);
    let pick = |ids: &[usize]| ids.iter().map(|&i| observations[i].0.clone()).collect::<Vec<_>>();
    let ks = kernels(space);
    let good = Kde::fit(ks.clone(), pick(&order[..n_good]), params.bandwidth_floor);
    let bad = (n_good < n).then(|| Kde::fit(ks, pick(&order[n_good..]), params.bandwidth_floor));
    Ok(DensityPair { good, bad })
}

/// Uniform with probability `random_fraction`, otherwise the best of
/// `n_candidates` draws from the good density by density ratio.
pub fn kde_acquire<R: Rng + ?Sized>(
    space: &ConfigurationSpace,
    pair: Option<&DensityPair>,
    params: &KDEParams,
    rng: &mut R,
) -> Configuration {
    let pair = match pair {
        Some(p) if params.random_fraction < 1.0 && rng.random::<f64>() >= params.random_fraction => p,
        _ => return space.sample(rng),
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..params.n_candidates {
        let x = pair.good.sample_near(params.bandwidth_factor, rng);
        let score = pair.ratio(&x);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, x));
        }
    }
    space.from_unit_vec_clipped(&best.expect("n_candidates >= 1").1)
}

fn unit_observation(space: &ConfigurationSpace, obs: &Observation) -> (Vec<f64>, f64) {
    let u = space.to_unit_vec(&obs.proposal.config).expect("proposals are legal");
    (u, obs.loss())
}

/// Black-box density-ratio BO at maximum fidelity.
pub struct KdeBo {
    problem: Problem,
    params: KDEParams,
    rng: ChaCha8Rng,
    observations: Vec<(Vec<f64>, f64)>,
    pending: Option<Proposal>,
    asked: usize,
}

impl KdeBo {
    pub fn new(problem: Problem, params: KDEParams, seed: u64) -> Self {
        Self {
            problem,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            observations: Vec::new(),
            pending: None,
            asked: 0,
        }
    }
}

impl Optimizer for KdeBo {
    fn name(&self) -> &'static str {
        "kde_bo"
    }

    fn params(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        self.params.describe(&mut out);
        out
    }

    fn ask(&mut self) -> Option<Proposal> {
        if self.pending.is_some() {
            return None;
        }
        let pair = kde_fit(&self.problem.space, &self.observations, &self.params).ok();
        let config = kde_acquire(&self.problem.space, pair.as_ref(), &self.params, &mut self.rng);
        let proposal = Proposal {
            config,
            fidelity: self.problem.max_fidelity(),
            tag: format!("kde:{}", self.asked),
        };
        self.asked += 1;
        self.pending = Some(proposal.clone());
        Some(proposal)
    }

    fn tell(&mut self, observation: &Observation) -> Result<(), OptimizerError> {
        if self.pending.as_ref() != Some(&observation.proposal) {
            return Err(OptimizerError::UnknownProposal);
        }
        self.pending = None;
        self.observations.push(unit_observation(&self.problem.space, observation));
        Ok(())
    }
}

/// BOHB's sampler: one model per fidelity, new configurations drawn from
/// the highest fidelity with enough observations.
pub struct KdeSampler {
    problem: Problem,
    params: KDEParams,
    by_fidelity: Vec<(FidelityPoint, Vec<(Vec<f64>, f64)>)>,
}

impl KdeSampler {
    pub fn new(problem: Problem, params: KDEParams) -> Self {
        Self {
            problem,
            params,
            by_fidelity: Vec::new(),
        }
    }

    pub fn record(&mut self, fidelity: &FidelityPoint, unit: Vec<f64>, loss: f64) {
        match self.by_fidelity.binary_search_by(|(f, _)| f.compare(fidelity)) {
            Ok(i) => self.by_fidelity[i].1.push((unit, loss)),
            Err(i) => self.by_fidelity.insert(i, (fidelity.clone(), vec![(unit, loss)])),
        }
    }

    /// Fidelity whose model would be used for the next new configuration.
    pub fn model_fidelity(&self) -> Option<&FidelityPoint> {
        self.by_fidelity
            .iter()
            .rev()
            .find(|(_, obs)| obs.len() >= self.params.min_points_per_model)
            .map(|(f, _)| f)
    }
}

impl RungSampler for KdeSampler {
    fn name(&self) -> &'static str {
        "bohb"
    }

    fn params(&self, out: &mut BTreeMap<String, String>) {
        self.params.describe(out);
    }

    fn propose(
        &mut self,
        at: RungPosition,
        slot: usize,
        _fidelity: &FidelityPoint,
        promoted: &[Configuration],
        rng: &mut ChaCha8Rng,
    ) -> Configuration {
        if at.rung > 0 {
            return promoted[slot].clone();
        }
        let pair = self.model_fidelity().and_then(|f| {
            let (_, obs) = self.by_fidelity.iter().find(|(g, _)| g == f).expect("present");
            kde_fit(&self.problem.space, obs, &self.params).ok()
        });
        kde_acquire(&self.problem.space, pair.as_ref(), &self.params, rng)
    }

    fn observe(&mut self, _at: RungPosition, _slot: usize, obs: &Observation) {
        let (u, loss) = unit_observation(&self.problem.space, obs);
        self.record(&obs.proposal.fidelity, u, loss);
    }
}
