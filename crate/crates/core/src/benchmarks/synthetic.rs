use indexmap::IndexMap;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Benchmark, BenchmarkClass, BenchmarkDescriptor, BenchmarkError, EvalResult, Seed};
use crate::configspace::{Configuration, ConfigurationSpace, FidelityPoint, FidelitySpace};
use crate::seeding::{hash_bytes, to_open_unit};

/// Fixtures of a synthetic multi-fidelity quadratic.
///
/// With unit coordinates `u` and fidelity fraction `phi = prod(b / b_max)`:
///
/// ```text
/// full(u)  = sum_i w_i (u_i - o_i)^2
/// bias(u)  = bias_base + bias_curvature * mean_i (u_i - s_i)^2
/// loss     = full(u) + bias(u) (1 - phi) + noise (1 - phi) xi
/// cost     = cost_scale * phi^cost_exponent
/// ```
///
/// `xi` is a standard normal keyed by (config, fidelity, seed). The loss is
/// floored at zero so that zero stays a valid best-known value.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub weights: Vec<f64>,
    pub optimum: Vec<f64>,
    pub bias_base: f64,
    pub bias_curvature: f64,
    /// Minimizer of the low-fidelity bias term.
    pub bias_shift: Vec<f64>,
    pub noise: f64,
    pub cost_scale: f64,
    pub cost_exponent: f64,
    /// Extra metrics are the default loss scaled by `1 + 0.1 * j`.
    pub metrics: Vec<String>,
}

impl SyntheticParams {
    /// Unit weights, centred optimum, no bias and no noise.
    pub fn plain(dim: usize) -> Self {
        Self {
            weights: vec![1.0; dim],
            optimum: vec![0.5; dim],
            bias_base: 0.0,
            bias_curvature: 0.0,
            bias_shift: vec![0.5; dim],
            noise: 0.0,
            cost_scale: 1.0,
            cost_exponent: 1.0,
            metrics: vec!["loss".to_string()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    descriptor: BenchmarkDescriptor,
    params: SyntheticParams,
}

impl SyntheticBenchmark {
    pub fn new(
        name: impl Into<String>,
        space: ConfigurationSpace,
        fidelity_space: FidelitySpace,
        params: SyntheticParams,
    ) -> Result<Self, BenchmarkError> {
        let d = space.len();
        let bad = |m: &str| Err(BenchmarkError::InvalidDescriptor(m.to_string()));
        if params.weights.len() != d || params.optimum.len() != d || params.bias_shift.len() != d {
            return bad("fixture vectors must match the space dimension");
        }
        if params.weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be nonnegative");
        }
        if params.bias_base < 0.0 || params.bias_curvature < 0.0 || params.noise < 0.0 {
            return bad("bias and noise scales must be nonnegative");
        }
        if !(params.cost_scale > 0.0) || !(params.cost_exponent > 0.0) {
            return bad("cost scale and exponent must be positive");
        }
        let mut descriptor =
            BenchmarkDescriptor::new(name, BenchmarkClass::Raw, space, fidelity_space, params.metrics.clone())?;
        descriptor.known_best = Some(params.metrics.iter().map(|m| (m.clone(), 0.0)).collect());
        Ok(Self { descriptor, params })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Standard normal noise draw for one (config, fidelity, seed) triple.
    pub fn noise_draw(&self, config: &Configuration, fidelity: &FidelityPoint, seed: Seed) -> f64 {
        let mut key = self.descriptor.space.canonical_key(config);
        key.push(b'|');
        key.extend(self.descriptor.fidelity_space.canonical_key(fidelity));
        key.push(b'|');
        match seed {
            Seed::Fixed(s) => key.extend_from_slice(&s.to_le_bytes()),
            Seed::Average => key.push(b'a'),
        }
        let u = to_open_unit(hash_bytes(&key));
        Normal::standard().inverse_cdf(u)
    }
}

impl Benchmark for SyntheticBenchmark {
    fn descriptor(&self) -> &BenchmarkDescriptor {
        &self.descriptor
    }

    fn evaluate(
        &self,
        config: &Configuration,
        fidelity: &FidelityPoint,
        seed: Seed,
    ) -> Result<EvalResult, BenchmarkError> {
        let space = &self.descriptor.space;
        space.validate(config)?;
        let u = space.to_unit_vec(config)?;
        let phi: f64 = self.descriptor.fidelity_space.fractions(fidelity)?.iter().product();
        let p = &self.params;

        let full: f64 = u
            .iter()
            .zip(&p.optimum)
            .zip(&p.weights)
            .map(|((x, o), w)| w * (x - o).powi(2))
            .sum();
        let mut loss = full;
        if phi < 1.0 {
            let d = u.len().max(1) as f64;
            let spread: f64 = u.iter().zip(&p.bias_shift).map(|(x, s)| (x - s).powi(2)).sum::<f64>() / d;
            let bias = p.bias_base + p.bias_curvature * spread;
            let xi = if p.noise > 0.0 {
                self.noise_draw(config, fidelity, seed)
            } else {
                0.0
            };
            loss += bias * (1.0 - phi) + p.noise * (1.0 - phi) * xi;
        }
        let loss = loss.max(0.0);

        let metrics: IndexMap<String, f64> = p
            .metrics
            .iter()
            .enumerate()
            .map(|(j, m)| (m.clone(), if j == 0 { loss } else { loss * (1.0 + 0.1 * j as f64) }))
            .collect();
        Ok(EvalResult {
            metrics,
            cost: p.cost_scale * phi.powf(p.cost_exponent),
            fidelity: fidelity.clone(),
            seed,
        })
    }

    fn default_budget(&self) -> Result<f64, BenchmarkError> {
        Ok(self
            .descriptor
            .budget_override
            .unwrap_or(100.0 * self.params.cost_scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::{HyperparameterSpec, Value};

    fn one_d(params: SyntheticParams) -> SyntheticBenchmark {
        let space = ConfigurationSpace::new(vec![HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap()]).unwrap();
        let fs = FidelitySpace::single(HyperparameterSpec::float("b", 0.1, 1.0, false).unwrap()).unwrap();
        SyntheticBenchmark::new("t", space, fs, params).unwrap()
    }

    fn at(x: f64) -> Configuration {
        [("x", Value::Float(x))].into_iter().collect()
    }

    fn fid(b: f64) -> FidelityPoint {
        [("b", Value::Float(b))].into_iter().collect()
    }

    #[test]
    fn optimum_at_max_fidelity_is_zero() {
        let mut p = SyntheticParams::plain(1);
        p.noise = 0.5;
        p.bias_base = 0.3;
        let b = one_d(p);
        for s in 0..10 {
            assert_eq!(b.evaluate(&at(0.5), &fid(1.0), Seed::Fixed(s)).unwrap().loss(), 0.0);
        }
    }

    #[test]
    fn constant_bias_plugs_into_formula() {
        let mut p = SyntheticParams::plain(1);
        p.bias_base = 0.2;
        let b = one_d(p);
        let r = b.evaluate(&at(0.5), &fid(0.5), Seed::Fixed(0)).unwrap();
        assert!((r.loss() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cost_increases_with_fidelity() {
        let b = one_d(SyntheticParams::plain(1));
        let lo = b.evaluate(&at(0.2), &fid(0.1), Seed::Fixed(0)).unwrap().cost;
        let hi = b.evaluate(&at(0.2), &fid(1.0), Seed::Fixed(0)).unwrap().cost;
        assert!(hi > lo);
        assert_eq!(b.default_budget().unwrap(), 100.0);
    }

    #[test]
    fn seed_changes_noise_only_below_max_fidelity() {
        let mut p = SyntheticParams::plain(1);
        p.noise = 0.1;
        p.bias_base = 0.5;
        let b = one_d(p);
        let a = b.evaluate(&at(0.3), &fid(0.5), Seed::Fixed(1)).unwrap();
        let c = b.evaluate(&at(0.3), &fid(0.5), Seed::Fixed(2)).unwrap();
        assert_ne!(a.loss(), c.loss());
        let a = b.evaluate(&at(0.3), &fid(1.0), Seed::Fixed(1)).unwrap();
        let c = b.evaluate(&at(0.3), &fid(1.0), Seed::Fixed(2)).unwrap();
        assert_eq!(a.loss(), c.loss());
        assert_eq!(
            b.evaluate(&at(0.3), &fid(0.5), Seed::Fixed(1)).unwrap(),
            b.evaluate(&at(0.3), &fid(0.5), Seed::Fixed(1)).unwrap()
        );
    }

    #[test]
    fn rejects_out_of_space_queries() {
        let b = one_d(SyntheticParams::plain(1));
        assert!(b.evaluate(&at(1.5), &fid(1.0), Seed::Fixed(0)).is_err());
        assert!(b.evaluate(&at(0.5), &fid(0.01), Seed::Fixed(0)).is_err());
    }
}
