//! Benchmarks behind a single evaluation interface.
//!
//! Three classes share the [`Benchmark`] trait: raw objectives that compute
//! their value ([`SyntheticBenchmark`]), tabular benchmarks that look up
//! recorded rows ([`TabularBenchmark`]) and surrogates that predict values
//! from a table anywhere in the original space ([`SurrogateBenchmark`]).
//!
//! All metrics are losses. The first declared metric is the default
//! objective; its value at maximum fidelity is the optimization target.

use std::fmt;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::configspace::{ConfigurationSpace, FidelityPoint, FidelitySpace, SpaceError};

pub mod catalog;
mod store_io;
mod surrogate;
mod synthetic;
mod tabular;

pub use store_io::{read_store, write_store};
pub use surrogate::{KnnPredictor, Predictor, SurrogateBenchmark};
pub use synthetic::{SyntheticBenchmark, SyntheticParams};
pub use tabular::{generate_table, Row, SeedMode, Sentinel, TableStore, TabularBenchmark};

/// Requested evaluation seed. `Average` asks tabular benchmarks for the
/// mean over their stored seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Seed {
    Fixed(u64),
    Average,
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Seed::Fixed(s) => write!(f, "{s}"),
            Seed::Average => f.write_str("average"),
        }
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Seed::Fixed(v) => s.serialize_u64(*v),
            Seed::Average => s.serialize_str("average"),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl de::Visitor<'_> for Visitor {
            type Value = Seed;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an unsigned seed or \"average\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seed, E> {
                Ok(Seed::Fixed(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seed, E> {
                u64::try_from(v).map(Seed::Fixed).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Seed, E> {
                match v {
                    "average" => Ok(Seed::Average),
                    _ => v.parse().map(Seed::Fixed).map_err(E::custom),
                }
            }
        }
        d.deserialize_any(Visitor)
    }
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("configuration is not on the table grid: {0}")]
    OffGrid(String),
    #[error("fidelity is not stored in the table: {0}")]
    MissingFidelity(String),
    #[error("seed {0} is not stored in the table")]
    UnknownSeed(u64),
    #[error("no row for config {config_id}, fidelity {fidelity_index}, seed {seed}")]
    MissingRow {
        config_id: usize,
        fidelity_index: usize,
        seed: u64,
    },
    #[error("table has no rows")]
    EmptyTable,
    #[error("no rows at the maximum fidelity")]
    NoMaxFidelityRows,
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed store file: {0}")]
    Format(String),
}

/// Values returned by one objective call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metrics: IndexMap<String, f64>,
    /// Seconds, simulated or measured.
    pub cost: f64,
    pub fidelity: FidelityPoint,
    pub seed: Seed,
}

impl EvalResult {
    /// Value of the first (default) metric.
    pub fn loss(&self) -> f64 {
        self.metrics.values().next().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkClass {
    Raw,
    Tabular,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDescriptor {
    pub name: String,
    pub class: BenchmarkClass,
    #[serde(rename = "parameters")]
    pub space: ConfigurationSpace,
    #[serde(rename = "fidelities")]
    pub fidelity_space: FidelitySpace,
    /// Default objective first.
    pub metrics: Vec<String>,
    /// Best known value per metric at the highest fidelity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_best: Option<IndexMap<String, f64>>,
    /// Fixed optimization budget in seconds, overriding the derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_override: Option<f64>,
}

impl BenchmarkDescriptor {
    pub fn new(
        name: impl Into<String>,
        class: BenchmarkClass,
        space: ConfigurationSpace,
        fidelity_space: FidelitySpace,
        metrics: Vec<String>,
    ) -> Result<Self, BenchmarkError> {
        let d = Self {
            name: name.into(),
            class,
            space,
            fidelity_space,
            metrics,
            known_best: None,
            budget_override: None,
        };
        d.check()?;
        Ok(d)
    }

    pub(crate) fn check(&self) -> Result<(), BenchmarkError> {
        if self.metrics.is_empty() {
            return Err(BenchmarkError::InvalidDescriptor("no metrics declared".into()));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if self.metrics[..i].contains(m) {
                return Err(BenchmarkError::InvalidDescriptor(format!("duplicate metric `{m}`")));
            }
        }
        if let Some(best) = &self.known_best {
            if let Some(k) = best.keys().find(|k| !self.metrics.contains(k)) {
                return Err(BenchmarkError::InvalidDescriptor(format!("known best for undeclared metric `{k}`")));
            }
        }
        if let Some(b) = self.budget_override {
            if !(b > 0.0) {
                return Err(BenchmarkError::InvalidDescriptor("budget override must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn default_metric(&self) -> &str {
        &self.metrics[0]
    }

    pub fn known_best_default(&self) -> Option<f64> {
        self.known_best.as_ref()?.get(self.default_metric()).copied()
    }
}

/// An HPO benchmark: a deterministic function of (config, fidelity, seed).
pub trait Benchmark: Send + Sync {
    fn descriptor(&self) -> &BenchmarkDescriptor;

    /// The space optimizers should search. Tabular benchmarks restrict it to
    /// the recorded grid.
    fn search_space(&self) -> &ConfigurationSpace {
        &self.descriptor().space
    }

    fn search_fidelity_space(&self) -> &FidelitySpace {
        &self.descriptor().fidelity_space
    }

    fn evaluate(
        &self,
        config: &crate::configspace::Configuration,
        fidelity: &FidelityPoint,
        seed: Seed,
    ) -> Result<EvalResult, BenchmarkError>;

    /// Maps an arbitrary 64-bit draw to a seed this benchmark accepts.
    fn seed_for(&self, draw: u64) -> Seed {
        Seed::Fixed(draw)
    }

    /// 100 times the mean cost at the highest fidelity, unless the
    /// descriptor declares a fixed budget.
    fn default_budget(&self) -> Result<f64, BenchmarkError> {
        if let Some(b) = self.descriptor().budget_override {
            return Ok(b);
        }
        sampled_default_budget(self, 64)
    }
}

impl<B: Benchmark + ?Sized> Benchmark for Box<B> {
    fn descriptor(&self) -> &BenchmarkDescriptor {
        (**self).descriptor()
    }
    fn search_space(&self) -> &ConfigurationSpace {
        (**self).search_space()
    }
    fn search_fidelity_space(&self) -> &FidelitySpace {
        (**self).search_fidelity_space()
    }
    fn evaluate(
        &self,
        config: &crate::configspace::Configuration,
        fidelity: &FidelityPoint,
        seed: Seed,
    ) -> Result<EvalResult, BenchmarkError> {
        (**self).evaluate(config, fidelity, seed)
    }
    fn seed_for(&self, draw: u64) -> Seed {
        (**self).seed_for(draw)
    }
    fn default_budget(&self) -> Result<f64, BenchmarkError> {
        (**self).default_budget()
    }
}

/// Estimates the default budget of a raw benchmark from `n` fixed uniform
/// configurations at maximum fidelity.
pub fn sampled_default_budget<B: Benchmark + ?Sized>(bench: &B, n: usize) -> Result<f64, BenchmarkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fidelity = bench.search_fidelity_space().max_point();
    let mut total = 0.0;
    for i in 0..n {
        let config = bench.search_space().sample(&mut rng);
        total += bench.evaluate(&config, &fidelity, bench.seed_for(i as u64))?.cost;
    }
    if n == 0 {
        return Err(BenchmarkError::NoMaxFidelityRows);
    }
    Ok(100.0 * total / n as f64)
}
