use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Benchmark, BenchmarkClass, BenchmarkDescriptor, BenchmarkError, EvalResult, Seed};
use crate::configspace::{
    Configuration, ConfigurationSpace, Domain, FidelityPoint, FidelitySpace, GridBins, HyperparameterSpec,
    Value,
};

/// One recorded evaluation; metrics are aligned with the descriptor's
/// metric list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metrics: Vec<f64>,
    pub cost: f64,
}

/// Value returned for rows missing from a sparse table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sentinel {
    pub loss: f64,
    pub cost: f64,
}

impl Default for Sentinel {
    fn default() -> Self {
        Self { loss: 1.0, cost: 0.0 }
    }
}

/// Recorded (config, fidelity, seed) results backing tabular and
/// surrogate benchmarks.
#[derive(Debug, Clone)]
pub struct TableStore {
    descriptor: BenchmarkDescriptor,
    configs: Vec<Configuration>,
    fidelities: Vec<FidelityPoint>,
    seeds: Vec<u64>,
    rows: Vec<Option<Row>>,
    sentinel: Option<Sentinel>,
    config_ids: HashMap<Vec<u8>, usize>,
    fidelity_ids: HashMap<Vec<u8>, usize>,
}

impl TableStore {
    /// Builds a store from indexed rows `((config_id, fidelity_index,
    /// seed_index), row)`. Without a sentinel the table must be dense.
    pub fn new(
        mut descriptor: BenchmarkDescriptor,
        configs: Vec<Configuration>,
        fidelities: Vec<FidelityPoint>,
        seeds: Vec<u64>,
        entries: impl IntoIterator<Item = ((usize, usize, usize), Row)>,
        sentinel: Option<Sentinel>,
    ) -> Result<Self, BenchmarkError> {
        descriptor.class = BenchmarkClass::Tabular;
        descriptor.check()?;
        let invalid = |m: String| Err(BenchmarkError::InvalidTable(m));
        if configs.is_empty() || fidelities.is_empty() || seeds.is_empty() {
            return Err(BenchmarkError::EmptyTable);
        }
        for (i, s) in seeds.iter().enumerate() {
            if seeds[..i].contains(s) {
                return invalid(format!("duplicate seed {s}"));
            }
        }
        let mut config_ids = HashMap::with_capacity(configs.len());
        for (i, c) in configs.iter().enumerate() {
            descriptor.space.validate(c)?;
            if config_ids.insert(descriptor.space.canonical_key(c), i).is_some() {
                return invalid(format!("duplicate grid configuration at id {i}"));
            }
        }
        let mut fidelity_ids = HashMap::with_capacity(fidelities.len());
        for (i, f) in fidelities.iter().enumerate() {
            descriptor.fidelity_space.validate(f)?;
            if fidelity_ids.insert(descriptor.fidelity_space.canonical_key(f), i).is_some() {
                return invalid(format!("duplicate fidelity at index {i}"));
            }
        }

        let (nf, ns) = (fidelities.len(), seeds.len());
        let mut rows: Vec<Option<Row>> = vec![None; configs.len() * nf * ns];
        for ((c, f, s), row) in entries {
            if c >= configs.len() || f >= nf || s >= ns {
                return invalid(format!("row index ({c}, {f}, {s}) out of range"));
            }
            if row.metrics.len() != descriptor.metrics.len() {
                return invalid(format!("row ({c}, {f}, {s}) has {} metrics", row.metrics.len()));
            }
            if !(row.cost >= 0.0) {
                return invalid(format!("row ({c}, {f}, {s}) has negative cost"));
            }
            let slot = &mut rows[(c * nf + f) * ns + s];
            if slot.is_some() {
                return invalid(format!("duplicate row ({c}, {f}, {s})"));
            }
            *slot = Some(row);
        }
        if sentinel.is_none() {
            if let Some(i) = rows.iter().position(Option::is_none) {
                return Err(BenchmarkError::MissingRow {
                    config_id: i / (nf * ns),
                    fidelity_index: (i / ns) % nf,
                    seed: seeds[i % ns],
                });
            }
        }
        Ok(Self {
            descriptor,
            configs,
            fidelities,
            seeds,
            rows,
            sentinel,
            config_ids,
            fidelity_ids,
        })
    }

    pub fn descriptor(&self) -> &BenchmarkDescriptor {
        &self.descriptor
    }

    pub(crate) fn descriptor_mut(&mut self) -> &mut BenchmarkDescriptor {
        &mut self.descriptor
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn fidelities(&self) -> &[FidelityPoint] {
        &self.fidelities
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn sentinel(&self) -> Option<Sentinel> {
        self.sentinel
    }

    pub fn is_sparse(&self) -> bool {
        self.sentinel.is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Present rows in (config_id, fidelity index, seed index) order.
    pub fn rows(&self) -> impl Iterator<Item = ((usize, usize, usize), &Row)> {
        let (nf, ns) = (self.fidelities.len(), self.seeds.len());
        self.rows
            .iter()
            .enumerate()
            .filter_map(move |(i, r)| r.as_ref().map(|r| ((i / (nf * ns), (i / ns) % nf, i % ns), r)))
    }

    pub fn row(&self, config_id: usize, fidelity_index: usize, seed_index: usize) -> Option<&Row> {
        let (nf, ns) = (self.fidelities.len(), self.seeds.len());
        if config_id >= self.configs.len() || fidelity_index >= nf || seed_index >= ns {
            return None;
        }
        self.rows[(config_id * nf + fidelity_index) * ns + seed_index].as_ref()
    }

    pub fn config_id(&self, config: &Configuration) -> Option<usize> {
        self.config_ids.get(&self.descriptor.space.canonical_key(config)).copied()
    }

    pub fn fidelity_index(&self, fidelity: &FidelityPoint) -> Option<usize> {
        self.fidelity_ids
            .get(&self.descriptor.fidelity_space.canonical_key(fidelity))
            .copied()
    }

    fn result_from(&self, metrics: Vec<f64>, cost: f64, fidelity_index: usize, seed: Seed) -> EvalResult {
        EvalResult {
            metrics: self.descriptor.metrics.iter().cloned().zip(metrics).collect(),
            cost,
            fidelity: self.fidelities[fidelity_index].clone(),
            seed,
        }
    }

    fn sentinel_result(&self, s: Sentinel, fidelity_index: usize, seed: Seed) -> EvalResult {
        self.result_from(vec![s.loss; self.descriptor.metrics.len()], s.cost, fidelity_index, seed)
    }

    /// Lookup by grid ids.
    pub fn lookup_ids(&self, config_id: usize, fidelity_index: usize, seed: Seed) -> Result<EvalResult, BenchmarkError> {
        if config_id >= self.configs.len() {
            return Err(BenchmarkError::OffGrid(format!("config id {config_id}")));
        }
        if fidelity_index >= self.fidelities.len() {
            return Err(BenchmarkError::MissingFidelity(format!("index {fidelity_index}")));
        }
        match seed {
            Seed::Fixed(s) => {
                let si = self
                    .seeds
                    .iter()
                    .position(|x| *x == s)
                    .ok_or(BenchmarkError::UnknownSeed(s))?;
                match (self.row(config_id, fidelity_index, si), self.sentinel) {
                    (Some(r), _) => Ok(self.result_from(r.metrics.clone(), r.cost, fidelity_index, seed)),
                    (None, Some(sent)) => Ok(self.sentinel_result(sent, fidelity_index, seed)),
                    (None, None) => Err(BenchmarkError::MissingRow {
                        config_id,
                        fidelity_index,
                        seed: s,
                    }),
                }
            }
            Seed::Average => {
                let present: Vec<&Row> = (0..self.seeds.len())
                    .filter_map(|si| self.row(config_id, fidelity_index, si))
                    .collect();
                if present.is_empty() {
                    return match self.sentinel {
                        Some(sent) => Ok(self.sentinel_result(sent, fidelity_index, seed)),
                        None => Err(BenchmarkError::MissingRow {
                            config_id,
                            fidelity_index,
                            seed: self.seeds[0],
                        }),
                    };
                }
                let n = present.len() as f64;
                let mut metrics = vec![0.0; self.descriptor.metrics.len()];
                let mut cost = 0.0;
                for r in &present {
                    for (m, v) in metrics.iter_mut().zip(&r.metrics) {
                        *m += v;
                    }
                    cost += r.cost;
                }
                metrics.iter_mut().for_each(|m| *m /= n);
                Ok(self.result_from(metrics, cost / n, fidelity_index, seed))
            }
        }
    }

    /// Lookup by exact configuration and fidelity values.
    pub fn lookup(&self, config: &Configuration, fidelity: &FidelityPoint, seed: Seed) -> Result<EvalResult, BenchmarkError> {
        self.descriptor.space.validate(config)?;
        self.descriptor.fidelity_space.validate(fidelity)?;
        let fi = self
            .fidelity_index(fidelity)
            .ok_or_else(|| BenchmarkError::MissingFidelity(format!("{fidelity:?}")))?;
        match self.config_id(config) {
            Some(ci) => self.lookup_ids(ci, fi, seed),
            None => match self.sentinel {
                Some(sent) => {
                    if let Seed::Fixed(s) = seed {
                        if !self.seeds.contains(&s) {
                            return Err(BenchmarkError::UnknownSeed(s));
                        }
                    }
                    Ok(self.sentinel_result(sent, fi, seed))
                }
                None => Err(BenchmarkError::OffGrid(format!("{config:?}"))),
            },
        }
    }

    fn max_fidelity_indices(&self) -> Vec<usize> {
        let max = self.descriptor.fidelity_space.max_point();
        self.fidelities
            .iter()
            .enumerate()
            .filter(|(_, f)| f.compare(&max).is_eq())
            .map(|(i, _)| i)
            .collect()
    }

    /// Minimum of each metric over stored rows at the highest fidelity.
    pub fn best_at_max_fidelity(&self) -> Result<IndexMap<String, f64>, BenchmarkError> {
        let max = self.max_fidelity_indices();
        let mut best = vec![f64::INFINITY; self.descriptor.metrics.len()];
        let mut any = false;
        for ((_, f, _), r) in self.rows() {
            if max.contains(&f) {
                any = true;
                for (b, v) in best.iter_mut().zip(&r.metrics) {
                    *b = b.min(*v);
                }
            }
        }
        if !any {
            return Err(BenchmarkError::NoMaxFidelityRows);
        }
        Ok(self.descriptor.metrics.iter().cloned().zip(best).collect())
    }

    /// 100 times the mean recorded cost over all configs and seeds at the
    /// highest fidelity, unless the descriptor fixes the budget.
    pub fn default_budget(&self) -> Result<f64, BenchmarkError> {
        if let Some(b) = self.descriptor.budget_override {
            return Ok(b);
        }
        let max = self.max_fidelity_indices();
        let (sum, n) = self
            .rows()
            .filter(|((_, f, _), _)| max.contains(f))
            .fold((0.0, 0usize), |(s, n), (_, r)| (s + r.cost, n + 1));
        if n == 0 {
            return Err(BenchmarkError::NoMaxFidelityRows);
        }
        Ok(100.0 * sum / n as f64)
    }
}

/// Evaluates a raw benchmark on every (grid config, fidelity grid point,
/// seed) triple. Evaluation runs in parallel; row order is by index.
pub fn generate_table<B: Benchmark + ?Sized>(
    raw: &B,
    config_bins: &GridBins,
    fidelity_steps: &GridBins,
    seeds: &[u64],
) -> Result<TableStore, BenchmarkError> {
    let descriptor = raw.descriptor().clone();
    let configs = descriptor.space.discretize_grid(config_bins)?;
    let fidelities = descriptor.fidelity_space.grid(fidelity_steps)?;
    let metrics = descriptor.metrics.clone();

    let per_config: Vec<Vec<((usize, usize, usize), Row)>> = configs
        .par_iter()
        .enumerate()
        .map(|(ci, config)| {
            let mut out = Vec::with_capacity(fidelities.len() * seeds.len());
            for (fi, fidelity) in fidelities.iter().enumerate() {
                for (si, &seed) in seeds.iter().enumerate() {
                    let r = raw.evaluate(config, fidelity, Seed::Fixed(seed))?;
                    let values = metrics
                        .iter()
                        .map(|m| {
                            r.metrics.get(m).copied().ok_or_else(|| {
                                BenchmarkError::InvalidTable(format!("raw benchmark did not return `{m}`"))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    out.push(((ci, fi, si), Row { metrics: values, cost: r.cost }));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, BenchmarkError>>()?;

    let mut store = TableStore::new(
        descriptor,
        configs,
        fidelities,
        seeds.to_vec(),
        per_config.into_iter().flatten(),
        None,
    )?;
    let best = store.best_at_max_fidelity()?;
    store.descriptor_mut().known_best = Some(best);
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    /// The runner's seed draws select one of the stored seeds.
    PerSeed,
    /// Every query returns the mean over stored seeds.
    Average,
}

/// A [`TableStore`] exposed as a benchmark over its recorded grid.
#[derive(Debug, Clone)]
pub struct TabularBenchmark {
    store: Arc<TableStore>,
    mode: SeedMode,
    search_space: ConfigurationSpace,
    search_fidelity_space: FidelitySpace,
}

fn distinct_sorted(spec: &HyperparameterSpec, values: impl Iterator<Item = Value>) -> Vec<Value> {
    let mut out: Vec<(f64, Value)> = Vec::new();
    for v in values {
        if !out.iter().any(|(_, w)| *w == v) {
            let key = spec.to_unit(&v).unwrap_or(f64::NAN);
            out.push((key, v));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.into_iter().map(|(_, v)| v).collect()
}

impl TabularBenchmark {
    pub fn new(store: Arc<TableStore>, mode: SeedMode) -> Result<Self, BenchmarkError> {
        let d = store.descriptor();
        let params = d
            .space
            .params()
            .iter()
            .map(|p| {
                let values = distinct_sorted(p, store.configs().iter().filter_map(|c| c.get(p.name()).cloned()));
                match p.domain() {
                    Domain::Categorical { .. } => HyperparameterSpec::categorical(p.name(), values),
                    _ => HyperparameterSpec::ordinal(p.name(), values),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let dims = d
            .fidelity_space
            .dims()
            .iter()
            .map(|p| {
                let values =
                    distinct_sorted(p, store.fidelities().iter().filter_map(|f| f.get(p.name()).cloned()));
                HyperparameterSpec::ordinal(p.name(), values)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            search_space: ConfigurationSpace::new(params)?,
            search_fidelity_space: FidelitySpace::new(dims)?,
            store,
            mode,
        })
    }

    pub fn store(&self) -> &TableStore {
        &self.store
    }

    pub fn mode(&self) -> SeedMode {
        self.mode
    }
}

impl Benchmark for TabularBenchmark {
    fn descriptor(&self) -> &BenchmarkDescriptor {
        self.store.descriptor()
    }

    fn search_space(&self) -> &ConfigurationSpace {
        &self.search_space
    }

    fn search_fidelity_space(&self) -> &FidelitySpace {
        &self.search_fidelity_space
    }

    fn evaluate(&self, config: &Configuration, fidelity: &FidelityPoint, seed: Seed) -> Result<EvalResult, BenchmarkError> {
        self.store.lookup(config, fidelity, seed)
    }

    fn seed_for(&self, draw: u64) -> Seed {
        match self.mode {
            SeedMode::Average => Seed::Average,
            SeedMode::PerSeed => {
                let seeds = self.store.seeds();
                Seed::Fixed(seeds[(draw % seeds.len() as u64) as usize])
            }
        }
    }

    fn default_budget(&self) -> Result<f64, BenchmarkError> {
        self.store.default_budget()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{SyntheticBenchmark, SyntheticParams};

    fn descriptor() -> BenchmarkDescriptor {
        let space = ConfigurationSpace::new(vec![HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap()]).unwrap();
        let fs = FidelitySpace::single(HyperparameterSpec::int("epochs", 1, 3, false).unwrap()).unwrap();
        BenchmarkDescriptor::new("t", BenchmarkClass::Tabular, space, fs, vec!["loss".into()]).unwrap()
    }

    fn cfg(x: f64) -> Configuration {
        [("x", Value::Float(x))].into_iter().collect()
    }

    fn fid(e: i64) -> FidelityPoint {
        [("epochs", Value::Int(e))].into_iter().collect()
    }

    fn two_seed_store(sentinel: Option<Sentinel>, skip_last: bool) -> TableStore {
        let configs = vec![cfg(0.0), cfg(1.0)];
        let fidelities = vec![fid(1), fid(3)];
        let mut entries = Vec::new();
        for c in 0..2 {
            for f in 0..2 {
                for s in 0..2 {
                    if skip_last && (c, f, s) == (1, 1, 1) {
                        continue;
                    }
                    let v = 0.2 + 0.2 * s as f64 + c as f64;
                    entries.push(((c, f, s), Row { metrics: vec![v], cost: 1.0 + f as f64 + s as f64 }));
                }
            }
        }
        TableStore::new(descriptor(), configs, fidelities, vec![10, 11], entries, sentinel).unwrap()
    }

    #[test]
    fn stored_row_verbatim_and_average() {
        let store = two_seed_store(None, false);
        let r = store.lookup(&cfg(0.0), &fid(3), Seed::Fixed(11)).unwrap();
        assert_eq!(r.loss(), 0.4);
        assert_eq!(r.cost, 3.0);
        assert_eq!(r.seed, Seed::Fixed(11));
        let avg = store.lookup(&cfg(0.0), &fid(3), Seed::Average).unwrap();
        assert!((avg.loss() - 0.3).abs() < 1e-15);
        assert_eq!(avg.cost, 2.5);
    }

    #[test]
    fn off_grid_and_unknown_seed_errors() {
        let store = two_seed_store(None, false);
        assert!(matches!(store.lookup(&cfg(0.5), &fid(3), Seed::Fixed(10)), Err(BenchmarkError::OffGrid(_))));
        assert!(matches!(store.lookup(&cfg(0.0), &fid(3), Seed::Fixed(5)), Err(BenchmarkError::UnknownSeed(5))));
        assert!(matches!(store.lookup(&cfg(0.0), &fid(2), Seed::Fixed(10)), Err(BenchmarkError::MissingFidelity(_))));
    }

    #[test]
    fn dense_requires_full_coverage() {
        let configs = vec![cfg(0.0)];
        let err = TableStore::new(
            descriptor(),
            configs,
            vec![fid(1)],
            vec![0],
            Vec::<((usize, usize, usize), Row)>::new(),
            None,
        );
        assert!(matches!(err, Err(BenchmarkError::MissingRow { .. })));
    }

    #[test]
    fn sparse_missing_row_returns_sentinel() {
        let store = two_seed_store(Some(Sentinel::default()), true);
        let r = store.lookup(&cfg(1.0), &fid(3), Seed::Fixed(11)).unwrap();
        assert_eq!((r.loss(), r.cost), (1.0, 0.0));
        let r = store.lookup(&cfg(0.5), &fid(3), Seed::Fixed(11)).unwrap();
        assert_eq!((r.loss(), r.cost), (1.0, 0.0));
        // average skips the missing seed
        let avg = store.lookup(&cfg(1.0), &fid(3), Seed::Average).unwrap();
        assert!((avg.loss() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn default_budget_uses_max_fidelity_rows() {
        let store = two_seed_store(None, false);
        // max fidelity costs are 2 and 3 for both configs
        assert_eq!(store.default_budget().unwrap(), 250.0);
        let mut d = descriptor();
        d.budget_override = Some(1e7);
        let store = TableStore::new(
            d,
            vec![cfg(0.0)],
            vec![fid(1)],
            vec![0],
            vec![((0, 0, 0), Row { metrics: vec![0.1], cost: 1.0 })],
            None,
        )
        .unwrap();
        assert_eq!(store.default_budget().unwrap(), 1e7);
        assert!(matches!(
            TableStore::new(
                descriptor(),
                vec![cfg(0.0)],
                vec![fid(1)],
                vec![0],
                vec![((0, 0, 0), Row { metrics: vec![0.1], cost: 1.0 })],
                None
            )
            .unwrap()
            .default_budget(),
            Err(BenchmarkError::NoMaxFidelityRows)
        ));
    }

    #[test]
    fn generated_table_counts_and_search_space() {
        let space = ConfigurationSpace::new(vec![HyperparameterSpec::float("x", 0.0, 1.0, false).unwrap()]).unwrap();
        let fs = FidelitySpace::single(HyperparameterSpec::float("b", 0.5, 1.0, false).unwrap()).unwrap();
        let raw = SyntheticBenchmark::new("s", space, fs, SyntheticParams::plain(1)).unwrap();
        let store = generate_table(&raw, &GridBins::uniform(3), &GridBins::uniform(2), &[0, 1]).unwrap();
        assert_eq!(store.len(), 12);
        assert_eq!(store.descriptor().known_best_default(), Some(0.0));
        let tab = TabularBenchmark::new(Arc::new(store), SeedMode::PerSeed).unwrap();
        assert_eq!(tab.search_space().params()[0].cardinality(), Some(3));
        assert_eq!(tab.search_fidelity_space().primary().cardinality(), Some(2));
        assert_eq!(tab.seed_for(3), Seed::Fixed(1));
    }
}
