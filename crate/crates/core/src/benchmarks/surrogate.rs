use std::collections::HashMap;
use std::sync::Arc;

use super::{Benchmark, BenchmarkClass, BenchmarkDescriptor, BenchmarkError, EvalResult, Seed, TableStore};
use crate::configspace::{Configuration, FidelityPoint};

/// Maps a feature vector to one prediction per target.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Vec<f64>;
}

/// Inverse-distance weighted k-nearest-neighbour regression. A query that
/// coincides with a training point returns that point's targets exactly.
#[derive(Debug, Clone)]
pub struct KnnPredictor {
    k: usize,
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl KnnPredictor {
    pub fn fit(k: usize, features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self, BenchmarkError> {
        if features.is_empty() {
            return Err(BenchmarkError::EmptyTable);
        }
        if features.len() != targets.len() {
            return Err(BenchmarkError::InvalidTable("feature/target count mismatch".into()));
        }
        Ok(Self {
            k: k.max(1),
            features,
            targets,
        })
    }
}

impl Predictor for KnnPredictor {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        if let Some(&(_, i)) = dist.iter().find(|(d, _)| *d == 0.0) {
            return self.targets[i].clone();
        }
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);

        let mut out = vec![0.0; self.targets[0].len()];
        let mut wsum = 0.0;
        for &(d, i) in &dist {
            let w = 1.0 / d;
            wsum += w;
            for (o, t) in out.iter_mut().zip(&self.targets[i]) {
                *o += w * t;
            }
        }
        out.iter_mut().for_each(|o| *o /= wsum);
        out
    }
}

/// Predicts metrics and cost anywhere in the original continuous space from
/// a table. Features are the unit-encoded configuration with the unit
/// fidelity coordinates appended; targets are the metrics followed by cost.
pub struct SurrogateBenchmark {
    descriptor: BenchmarkDescriptor,
    seeds: Vec<u64>,
    per_seed: HashMap<u64, Box<dyn Predictor>>,
    averaged: Box<dyn Predictor>,
}

type Fit<'a> = dyn Fn(Vec<Vec<f64>>, Vec<Vec<f64>>) -> Result<Box<dyn Predictor>, BenchmarkError> + 'a;

impl SurrogateBenchmark {
    /// Default predictor: k-NN with `k = 5`.
    pub fn fit(store: &TableStore) -> Result<Self, BenchmarkError> {
        Self::fit_knn(store, 5)
    }

    pub fn fit_knn(store: &TableStore, k: usize) -> Result<Self, BenchmarkError> {
        Self::fit_with(store, &|f, t| Ok(Box::new(KnnPredictor::fit(k, f, t)?) as Box<dyn Predictor>))
    }

    pub fn fit_with(store: &TableStore, fit: &Fit<'_>) -> Result<Self, BenchmarkError> {
        if store.is_empty() {
            return Err(BenchmarkError::EmptyTable);
        }
        let d = store.descriptor();
        let feature = |ci: usize, fi: usize| -> Result<Vec<f64>, BenchmarkError> {
            let mut x = d.space.to_unit_vec(&store.configs()[ci])?;
            x.extend(d.fidelity_space.to_unit_vec(&store.fidelities()[fi])?);
            Ok(x)
        };
        let target = |metrics: &[f64], cost: f64| {
            let mut t = metrics.to_vec();
            t.push(cost);
            t
        };

        let mut per_seed = HashMap::new();
        for (si, &seed) in store.seeds().iter().enumerate() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for ((ci, fi, s), row) in store.rows() {
                if s == si {
                    xs.push(feature(ci, fi)?);
                    ys.push(target(&row.metrics, row.cost));
                }
            }
            if !xs.is_empty() {
                per_seed.insert(seed, fit(xs, ys)?);
            }
        }

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for ci in 0..store.configs().len() {
            for fi in 0..store.fidelities().len() {
                if let Ok(r) = store.lookup_ids(ci, fi, Seed::Average) {
                    if (0..store.seeds().len()).any(|si| store.row(ci, fi, si).is_some()) {
                        xs.push(feature(ci, fi)?);
                        ys.push(target(&r.metrics.values().copied().collect::<Vec<_>>(), r.cost));
                    }
                }
            }
        }
        let averaged = fit(xs, ys)?;

        let mut descriptor = d.clone();
        descriptor.class = BenchmarkClass::Surrogate;
        Ok(Self {
            descriptor,
            seeds: store.seeds().to_vec(),
            per_seed,
            averaged,
        })
    }

    /// Wraps a shared store with the default predictor.
    pub fn from_store(store: Arc<TableStore>) -> Result<Self, BenchmarkError> {
        Self::fit(&store)
    }
}

impl std::fmt::Debug for SurrogateBenchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurrogateBenchmark")
            .field("name", &self.descriptor.name)
            .field("seeds", &self.seeds)
            .finish_non_exhaustive()
    }
}

impl Benchmark for SurrogateBenchmark {
    fn descriptor(&self) -> &BenchmarkDescriptor {
        &self.descriptor
    }

    fn evaluate(&self, config: &Configuration, fidelity: &FidelityPoint, seed: Seed) -> Result<EvalResult, BenchmarkError> {
        let d = &self.descriptor;
        d.space.validate(config)?;
        d.fidelity_space.validate(fidelity)?;
        let mut x = d.space.to_unit_vec(config)?;
        x.extend(d.fidelity_space.to_unit_vec(fidelity)?);
        let predictor = match seed {
            Seed::Fixed(s) => self.per_seed.get(&s).unwrap_or(&self.averaged),
            Seed::Average => &self.averaged,
        };
        let mut y = predictor.predict(&x);
        let cost = y.pop().unwrap_or(0.0).max(0.0);
        Ok(EvalResult {
            metrics: d.metrics.iter().cloned().zip(y).collect(),
            cost,
            fidelity: fidelity.clone(),
            seed,
        })
    }

    fn seed_for(&self, draw: u64) -> Seed {
        Seed::Fixed(self.seeds[(draw % self.seeds.len() as u64) as usize])
    }

    fn default_budget(&self) -> Result<f64, BenchmarkError> {
        if let Some(b) = self.descriptor.budget_override {
            return Ok(b);
        }
        super::sampled_default_budget(self, 64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Row;
    use crate::configspace::{ConfigurationSpace, FidelitySpace, HyperparameterSpec, Value};

    fn store() -> TableStore {
        let space = ConfigurationSpace::new(vec![HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap()]).unwrap();
        let fs = FidelitySpace::single(HyperparameterSpec::float("b", 0.5, 1.0, false).unwrap()).unwrap();
        let d = BenchmarkDescriptor::new("s", BenchmarkClass::Tabular, space, fs, vec!["loss".into()]).unwrap();
        let configs = vec![
            [("x", Value::Float(0.0))].into_iter().collect(),
            [("x", Value::Float(1.0))].into_iter().collect(),
        ];
        let fids = vec![[("b", Value::Float(1.0))].into_iter().collect()];
        let rows = vec![
            ((0, 0, 0), Row { metrics: vec![0.2], cost: 1.0 }),
            ((1, 0, 0), Row { metrics: vec![0.4], cost: 3.0 }),
        ];
        TableStore::new(d, configs, fids, vec![0], rows, None).unwrap()
    }

    fn q(x: f64) -> Configuration {
        [("x", Value::Float(x))].into_iter().collect()
    }

    #[test]
    fn interpolates_and_hits_training_points() {
        let s = store();
        let sur = SurrogateBenchmark::fit(&s).unwrap();
        let f: FidelityPoint = [("b", Value::Float(1.0))].into_iter().collect();
        let mid = sur.evaluate(&q(0.5), &f, Seed::Fixed(0)).unwrap();
        assert!((mid.loss() - 0.3).abs() < 1e-15);
        assert!((mid.cost - 2.0).abs() < 1e-15);
        let hit = sur.evaluate(&q(1.0), &f, Seed::Fixed(0)).unwrap();
        assert_eq!((hit.loss(), hit.cost), (0.4, 3.0));
        let k1 = SurrogateBenchmark::fit_knn(&s, 1).unwrap();
        assert_eq!(k1.evaluate(&q(0.0), &f, Seed::Fixed(0)).unwrap().loss(), 0.2);
        assert_eq!(sur.descriptor().class, BenchmarkClass::Surrogate);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(matches!(KnnPredictor::fit(5, vec![], vec![]), Err(BenchmarkError::EmptyTable)));
    }
}
