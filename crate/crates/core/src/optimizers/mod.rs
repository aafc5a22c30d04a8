//! Black-box and multi-fidelity optimizers behind an ask/tell contract.
//!
//! Every optimizer is a deterministic function of its seed and the sequence
//! of observations it is told. All model-based methods work in the unit
//! cube of the search space (see [`crate::configspace`]).
//!
//! | name        | method                                               |
//! |-------------|------------------------------------------------------|
//! | `rs`        | uniform random search at maximum fidelity            |
//! | `de`        | differential evolution, rand/1/bin                   |
//! | `kde_bo`    | density-ratio BO with factorized KDEs                |
//! | `hb`        | Hyperband over the primary fidelity                  |
//! | `bohb`      | Hyperband with per-fidelity KDE sampling             |
//! | `dehb`      | Hyperband with per-fidelity DE subpopulations        |
//! | `rs_median` | random search with median-stopping across fidelities |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmarks::{Benchmark, EvalResult};
use crate::configspace::{Configuration, ConfigurationSpace, FidelityPoint, FidelitySpace};

pub mod de;
pub mod hyperband;
pub mod dehb;
pub mod kde;
pub mod random;

pub use de::{DEParams, DifferentialEvolution};
pub use hyperband::{hb_schedule, sh_advance, Bracket, HBParams, HbSchedule, Hyperband, Rung};
pub use kde::{KDEParams, KdeBo};
pub use random::{median_prune, PruneDecision, RandomSearch, RandomSearchMedian};

pub const OPTIMIZER_NAMES: [&str; 7] = ["rs", "de", "hb", "bohb", "dehb", "kde_bo", "rs_median"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("unknown optimizer `{0}`")]
    UnknownOptimizer(String),
    #[error("optimizer `{optimizer}` has no parameter `{key}`")]
    UnknownParam { optimizer: String, key: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidParam { key: String, value: String, reason: String },
    #[error("population of {0} is too small, need at least 4")]
    PopulationTooSmall(usize),
    #[error("rung is incomplete: {missing} of {total} results missing")]
    IncompleteRung { missing: usize, total: usize },
    #[error("need at least {needed} observations, got {got}")]
    NotEnoughObservations { needed: usize, got: usize },
    #[error("observation does not match an outstanding proposal")]
    UnknownProposal,
}

/// What to evaluate next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub config: Configuration,
    pub fidelity: FidelityPoint,
    /// Opaque bookkeeping (bracket, rung, slot, population index).
    #[serde(default)]
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub proposal: Proposal,
    pub result: EvalResult,
    pub sim_time_at_finish: f64,
}

impl Observation {
    pub fn loss(&self) -> f64 {
        self.result.loss()
    }
}

/// The spaces an optimizer searches.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub space: ConfigurationSpace,
    pub fidelity_space: FidelitySpace,
}

impl Problem {
    pub fn new(space: ConfigurationSpace, fidelity_space: FidelitySpace) -> Self {
        Self { space, fidelity_space }
    }

    pub fn from_benchmark<B: Benchmark + ?Sized>(bench: &B) -> Self {
        Self::new(bench.search_space().clone(), bench.search_fidelity_space().clone())
    }

    pub fn max_fidelity(&self) -> FidelityPoint {
        self.fidelity_space.max_point()
    }
}

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Effective parameters, including defaults.
    fn params(&self) -> BTreeMap<String, String>;

    /// Next proposal, or `None` once the optimizer has nothing left to try.
    fn ask(&mut self) -> Option<Proposal>;

    fn tell(&mut self, observation: &Observation) -> Result<(), OptimizerError>;
}

/// Flat `key=value` parameter overrides.
pub type ParamOverrides = BTreeMap<String, String>;

pub(crate) fn parse_param<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, OptimizerError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| OptimizerError::InvalidParam {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

pub(crate) fn unknown(optimizer: &str, key: &str) -> OptimizerError {
    OptimizerError::UnknownParam {
        optimizer: optimizer.to_string(),
        key: key.to_string(),
    }
}

/// Builds an optimizer by name.
pub fn build_optimizer(
    name: &str,
    overrides: &ParamOverrides,
    problem: &Problem,
    seed: u64,
) -> Result<Box<dyn Optimizer>, OptimizerError> {
    let problem = problem.clone();
    Ok(match name {
        "rs" => {
            if let Some(k) = overrides.keys().next() {
                return Err(unknown(name, k));
            }
            Box::new(RandomSearch::new(problem, seed))
        }
        "de" => Box::new(DifferentialEvolution::new(problem, DEParams::from_overrides(name, overrides)?, seed)?),
        "kde_bo" => {
            let params = KDEParams::from_overrides(name, overrides, problem.space.len())?;
            Box::new(KdeBo::new(problem, params, seed))
        }
        "hb" => {
            let hb = HBParams::for_problem(&problem, overrides, name)?;
            Box::new(Hyperband::hb(problem, hb, seed))
        }
        "bohb" => {
            let (hb_keys, kde_keys) = split_overrides(overrides, &["eta"]);
            let hb = HBParams::for_problem(&problem, &hb_keys, name)?;
            let kde = KDEParams::from_overrides(name, &kde_keys, problem.space.len())?;
            Box::new(Hyperband::bohb(problem, hb, kde, seed))
        }
        "dehb" => {
            let (hb_keys, de_keys) = split_overrides(overrides, &["eta"]);
            let hb = HBParams::for_problem(&problem, &hb_keys, name)?;
            let de = DEParams::from_overrides(name, &de_keys)?;
            if de_keys.contains_key("np") {
                return Err(unknown(name, "np"));
            }
            Box::new(Hyperband::dehb(problem, hb, de, seed))
        }
        "rs_median" => {
            let hb = HBParams::for_problem(&problem, overrides, name)?;
            Box::new(RandomSearchMedian::new(problem, hb, seed))
        }
        other => return Err(OptimizerError::UnknownOptimizer(other.to_string())),
    })
}

fn split_overrides(overrides: &ParamOverrides, first: &[&str]) -> (ParamOverrides, ParamOverrides) {
    overrides
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .partition(|(k, _)| first.contains(&k.as_str()))
}
