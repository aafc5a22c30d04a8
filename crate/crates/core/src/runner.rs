//! Simulated-time experiment loop and run records.
//!
//! A run accumulates benchmark cost plus optimizer overhead into a
//! simulated clock. The evaluation whose completion crosses the budget is
//! kept, then the run stops. Records are stored as JSON lines: a header
//! document followed by one document per evaluation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmarks::{Benchmark, BenchmarkClass, EvalResult, Seed};
use crate::configspace::{Configuration, FidelityPoint};
use crate::optimizers::{build_optimizer, Observation, Optimizer, OptimizerError, ParamOverrides, Problem};
use crate::seeding::derive_seed;

pub const RECORD_EXTENSION: &str = "runs";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("need at least one repetition")]
    NoRepetitions,
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("record format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverheadMode {
    /// Wall-clock time around `ask` and `tell`.
    Measured,
    /// Overhead is always zero, which makes runs reproducible.
    #[default]
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub overhead: OverheadMode,
    /// Hard cap on the number of evaluations, on top of the budget.
    pub max_evaluations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub benchmark: String,
    pub class: BenchmarkClass,
    pub metric: String,
    #[serde(default)]
    pub known_best: Option<f64>,
    pub optimizer: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub budget: f64,
    pub overhead: OverheadMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub index: usize,
    pub config: Configuration,
    pub fidelity: FidelityPoint,
    pub seed: Seed,
    pub metrics: IndexMap<String, f64>,
    pub cost: f64,
    pub overhead: f64,
    pub sim_time: f64,
    #[serde(default)]
    pub tag: String,
}

impl RunEntry {
    pub fn loss(&self) -> f64 {
        self.metrics.values().next().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    pub entries: Vec<RunEntry>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.header.failure.is_some()
    }

    pub fn final_time(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.sim_time)
    }

    pub fn file_name(&self) -> String {
        record_file_name(&self.header.benchmark, &self.header.optimizer, self.header.seed)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RunError> {
        writeln!(w, "{}", to_line(&self.header)?)?;
        for e in &self.entries {
            writeln!(w, "{}", to_line(e)?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, RunError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or_else(|| RunError::Format("empty record".into()))??;
        let header: RunHeader = serde_json::from_str(&header_line).map_err(|e| RunError::Format(e.to_string()))?;
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| RunError::Format(e.to_string()))?);
        }
        Ok(Self { header, entries })
    }

    /// Writes into `dir` under [`RunRecord::file_name`].
    pub fn save(&self, dir: &Path) -> Result<PathBuf, RunError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        self.write_to(BufWriter::new(File::create(&path)?))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn to_line<T: Serialize>(v: &T) -> Result<String, RunError> {
    serde_json::to_string(v).map_err(|e| RunError::Format(e.to_string()))
}

pub fn record_file_name(benchmark: &str, optimizer: &str, seed: u64) -> String {
    let clean = |s: &str| s.replace(['/', '\\'], "_");
    format!("{}__{}__seed{seed}.{RECORD_EXTENSION}", clean(benchmark), clean(optimizer))
}

/// Every record file in `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, RunError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == RECORD_EXTENSION))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::load(p)).collect()
}

/// Runs `optimizer` on `bench` until the simulated clock reaches `budget`.
pub fn run_experiment(
    optimizer: &mut dyn Optimizer,
    bench: &dyn Benchmark,
    budget: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord, RunError> {
    if !(budget > 0.0) {
        return Err(RunError::InvalidBudget(budget));
    }
    let d = bench.descriptor();
    let mut header = RunHeader {
        benchmark: d.name.clone(),
        class: d.class,
        metric: d.default_metric().to_string(),
        known_best: d.known_best_default(),
        optimizer: optimizer.name().to_string(),
        params: optimizer.params(),
        seed,
        budget,
        overhead: options.overhead,
        failure: None,
    };
    let space = bench.search_space();
    let fidelity_space = bench.search_fidelity_space();
    let mut entries = Vec::new();
    let mut sim_time = 0.0;
    let clock = |start: Instant| match options.overhead {
        OverheadMode::Measured => start.elapsed().as_secs_f64(),
        OverheadMode::Zero => 0.0,
    };

    while sim_time < budget && options.max_evaluations.is_none_or(|m| entries.len() < m) {
        let index = entries.len();
        let t0 = Instant::now();
        let Some(proposal) = optimizer.ask() else { break };
        let mut overhead = clock(t0);

        if let Err(e) = space
            .validate(&proposal.config)
            .and_then(|_| fidelity_space.validate(&proposal.fidelity))
        {
            header.failure = Some(format!("illegal proposal: {e}"));
            break;
        }
        let eval_seed = bench.seed_for(derive_seed("benchmark", seed, index as u64));
        let result: EvalResult = match bench.evaluate(&proposal.config, &proposal.fidelity, eval_seed) {
            Ok(r) => r,
            Err(e) => {
                header.failure = Some(format!("evaluation failed: {e}"));
                break;
            }
        };
        let cost = result.cost;

        let t1 = Instant::now();
        let finish_without_tell = sim_time + cost + overhead;
        let obs = Observation {
            proposal: proposal.clone(),
            result: result.clone(),
            sim_time_at_finish: finish_without_tell,
        };
        let told = optimizer.tell(&obs);
        overhead += clock(t1);
        sim_time += cost + overhead;

        entries.push(RunEntry {
            index,
            config: proposal.config,
            fidelity: proposal.fidelity,
            seed: result.seed,
            metrics: result.metrics,
            cost,
            overhead,
            sim_time,
            tag: proposal.tag,
        });
        if let Err(e) = told {
            header.failure = Some(format!("optimizer rejected observation: {e}"));
            break;
        }
    }
    Ok(RunRecord { header, entries })
}

/// Optimizer name plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub name: String,
    #[serde(default)]
    pub params: ParamOverrides,
}

impl OptimizerSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: ParamOverrides::new(),
        }
    }

    pub fn build(&self, problem: &Problem, run_seed: u64) -> Result<Box<dyn Optimizer>, OptimizerError> {
        build_optimizer(&self.name, &self.params, problem, derive_seed("optimizer", run_seed, 0))
    }
}

/// A fresh optimizer seeded from `seed`, run once.
pub fn run_single(
    spec: &OptimizerSpec,
    bench: &dyn Benchmark,
    budget: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord, RunError> {
    let mut opt = spec.build(&Problem::from_benchmark(bench), seed)?;
    run_experiment(opt.as_mut(), bench, budget, seed, options)
}

/// Repetition `i` uses seed `base_seed + i`; output follows repetition
/// order regardless of `jobs`.
pub fn run_repetitions(
    spec: &OptimizerSpec,
    bench: &dyn Benchmark,
    budget: f64,
    n_reps: usize,
    base_seed: u64,
    options: &RunOptions,
    jobs: usize,
) -> Result<Vec<RunRecord>, RunError> {
    if n_reps == 0 {
        return Err(RunError::NoRepetitions);
    }
    // surface construction errors once instead of per repetition
    spec.build(&Problem::from_benchmark(bench), base_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        (0..n_reps)
            .into_par_iter()
            .map(|i| run_single(spec, bench, budget, base_seed + i as u64, options))
            .collect()
    })
}
