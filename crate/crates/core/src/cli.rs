//! The `mfbench` command line: `run`, `tabulate` and `analyze`.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, unknown names),
//! 2 for runtime failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, PlotData, Series, TrajectorySet};
use crate::benchmarks::catalog::{self, family_bins, FAMILIES};
use crate::benchmarks::{
    generate_table, read_store, write_store, Benchmark, BenchmarkError, SeedMode, SurrogateBenchmark, TabularBenchmark,
};
use crate::configspace::GridBins;
use crate::optimizers::{ParamOverrides, Problem};
use crate::runner::{self, OptimizerSpec, OverheadMode, RunOptions, RunRecord};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "MFBENCH_OUTPUT";
pub const STUDY_FILE: &str = "study.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "mfbench", version, about = "Multi-fidelity HPO benchmarking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an optimizer on a benchmark for several seeded repetitions.
    Run(RunArgs),
    /// Tabulate a raw benchmark over a configuration x fidelity x seed grid.
    Tabulate(TabulateArgs),
    /// Turn run records into trajectories, ranks, sign tests or ECDFs.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverheadArg {
    Measured,
    Zero,
}

impl From<OverheadArg> for OverheadMode {
    fn from(v: OverheadArg) -> Self {
        match v {
            OverheadArg::Measured => OverheadMode::Measured,
            OverheadArg::Zero => OverheadMode::Zero,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// `builtin:<name>`, `surrogate:<store dir>` or a tabular store directory.
    #[arg(long)]
    pub benchmark: String,
    #[arg(long)]
    pub optimizer: String,
    /// Optimizer parameter override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Simulated-time budget in seconds, or `auto`.
    #[arg(long, default_value = "auto")]
    pub budget: String,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OverheadArg::Measured)]
    pub overhead: OverheadArg,
    #[arg(long)]
    pub max_evals: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory; defaults to `$MFBENCH_OUTPUT/<benchmark>__<optimizer>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TabulateArgs {
    /// Raw benchmark, `builtin:<name>`.
    #[arg(long)]
    pub benchmark: String,
    /// Bins per numeric parameter; family defaults when omitted.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub fidelity_steps: usize,
    /// Number of seeds, `0..n`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Trajectories,
    Ranks,
    Signtest,
    Ecdf,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Directories of `.runs` files; repeatable.
    #[arg(long = "records")]
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow ranking across different benchmarks.
    #[arg(long)]
    pub per_family: bool,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub challengers: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.1, 0.01])]
    pub budget_fractions: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Tabular store for `ecdf`.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Effective configuration of a `run`, written as `study.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub benchmark: String,
    pub optimizer: OptimizerSpec,
    /// Effective optimizer parameters, defaults included.
    pub optimizer_params: std::collections::BTreeMap<String, String>,
    pub budget: f64,
    pub budget_auto: bool,
    pub repetitions: usize,
    pub base_seed: u64,
    pub overhead: OverheadMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<usize>,
    pub records: Vec<String>,
}

/// Resolves a benchmark source string.
pub fn load_benchmark(source: &str) -> Result<Box<dyn Benchmark>, CliError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return catalog::builtin(name).map(|b| Box::new(b) as Box<dyn Benchmark>).map_err(|e| match e {
            BenchmarkError::UnknownBenchmark(_) => usage(format!(
                "unknown benchmark `{name}`; known: {}",
                catalog::builtin_names().join(", ")
            )),
            e => runtime(e),
        });
    }
    if let Some(path) = source.strip_prefix("surrogate:") {
        let store = read_store(Path::new(path)).map_err(runtime)?;
        return Ok(Box::new(SurrogateBenchmark::fit(&store).map_err(runtime)?));
    }
    let path = Path::new(source);
    if !path.is_dir() {
        return Err(usage(format!("`{source}` is neither `builtin:<name>` nor a store directory")));
    }
    let store = read_store(path).map_err(runtime)?;
    Ok(Box::new(TabularBenchmark::new(Arc::new(store), SeedMode::PerSeed).map_err(runtime)?))
}

fn parse_overrides(set: &[String]) -> Result<ParamOverrides, CliError> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| usage(format!("expected KEY=VALUE, got `{kv}`")))
        })
        .collect()
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(runtime)
}

pub fn cmd_run(args: &RunArgs) -> Result<StudyConfig, CliError> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let bench = load_benchmark(&args.benchmark)?;
    let spec = OptimizerSpec {
        name: args.optimizer.clone(),
        params: parse_overrides(&args.set)?,
    };
    let probe = spec.build(&Problem::from_benchmark(bench.as_ref()), args.seed).map_err(usage)?;
    let (budget, budget_auto) = if args.budget == "auto" {
        (bench.default_budget().map_err(runtime)?, true)
    } else {
        let b: f64 = args
            .budget
            .parse()
            .map_err(|_| usage(format!("--budget must be a number or `auto`, got `{}`", args.budget)))?;
        if !(b > 0.0) {
            return Err(usage("--budget must be positive"));
        }
        (b, false)
    };
    let options = RunOptions {
        overhead: args.overhead.into(),
        max_evaluations: args.max_evals,
    };
    let out = args.out.clone().unwrap_or_else(|| {
        output_root().join(runner::record_file_name(&bench.descriptor().name, &spec.name, args.seed).replace(".runs", ""))
    });
    let records = runner::run_repetitions(&spec, bench.as_ref(), budget, args.reps, args.seed, &options, args.jobs)
        .map_err(runtime)?;
    fs::create_dir_all(&out).map_err(runtime)?;
    let mut names = Vec::new();
    let mut failures = Vec::new();
    for r in &records {
        r.save(&out).map_err(runtime)?;
        names.push(r.file_name());
        if let Some(f) = &r.header.failure {
            failures.push(format!("seed {}: {f}", r.header.seed));
        }
    }
    let study = StudyConfig {
        benchmark: args.benchmark.clone(),
        optimizer: spec,
        optimizer_params: probe.params(),
        budget,
        budget_auto,
        repetitions: args.reps,
        base_seed: args.seed,
        overhead: options.overhead,
        max_evaluations: options.max_evaluations,
        records: names,
    };
    write_json(&out.join(STUDY_FILE), &study)?;
    if !failures.is_empty() {
        return Err(runtime(format!("{} repetition(s) failed:\n  {}", failures.len(), failures.join("\n  "))));
    }
    Ok(study)
}

pub fn cmd_tabulate(args: &TabulateArgs) -> Result<usize, CliError> {
    let name = args
        .benchmark
        .strip_prefix("builtin:")
        .ok_or_else(|| usage("tabulate needs a raw benchmark, `builtin:<name>`"))?;
    let raw = catalog::builtin(name).map_err(usage)?;
    if args.out.is_dir() && fs::read_dir(&args.out).map_err(runtime)?.next().is_some() && !args.force {
        return Err(runtime(format!("{} is not empty; pass --force to overwrite", args.out.display())));
    }
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if args.fidelity_steps == 0 {
        return Err(usage("--fidelity-steps must be at least 1"));
    }
    let bins = match args.bins {
        Some(b) => GridBins::uniform(b),
        None if FAMILIES.contains(&name) => family_bins(name),
        None => GridBins::uniform(10),
    };
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let store = generate_table(&raw, &bins, &GridBins::uniform(args.fidelity_steps), &seeds).map_err(runtime)?;
    write_store(&store, &args.out).map_err(runtime)?;
    Ok(store.len())
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<RunRecord>, CliError> {
    if dirs.is_empty() {
        return Err(usage("--records is required"));
    }
    let mut all = Vec::new();
    for d in dirs {
        all.extend(runner::load_records(d).map_err(runtime)?);
    }
    if all.is_empty() {
        return Err(runtime("no .runs files found"));
    }
    Ok(all)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(runtime)?))
}

/// Writes the outputs of one analysis mode into `out` and returns their
/// paths.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<Vec<PathBuf>, CliError> {
    let out = args.out.clone().unwrap_or_else(|| output_root().join("analysis"));
    let written = match args.mode {
        Mode::Ecdf => {
            let table = args.table.as_ref().ok_or_else(|| usage("ecdf needs --table"))?;
            let store = read_store(table).map_err(runtime)?;
            let values = final_fidelity_values(&store).map_err(runtime)?;
            let steps = analysis::ecdf_normalized_regret(&values).map_err(runtime)?;
            fs::create_dir_all(&out).map_err(runtime)?;
            let csv = out.join("ecdf.csv");
            analysis::write_ecdf_csv(&steps, create(&csv)?).map_err(runtime)?;
            let plot = PlotData {
                title: format!("normalized regret ECDF, {}", store.descriptor().name),
                x_label: "normalized regret".into(),
                y_label: "fraction of configurations".into(),
                series: vec![Series {
                    name: store.descriptor().name.clone(),
                    points: steps,
                }],
            };
            let json = out.join("ecdf.json");
            plot.write_json(create(&json)?).map_err(runtime)?;
            vec![csv, json]
        }
        Mode::Trajectories => {
            let records = load_all(&args.records)?;
            fs::create_dir_all(&out).map_err(runtime)?;
            let csv = out.join("trajectories.csv");
            analysis::write_trajectories_csv(&records, create(&csv)?).map_err(runtime)?;
            let mut series = Vec::new();
            for r in &records {
                let t = analysis::record_regret(r).map_err(runtime)?;
                series.push(Series {
                    name: format!("{}/{}/{}", r.header.benchmark, r.header.optimizer, r.header.seed),
                    points: t.points.iter().map(|p| (p.time, p.loss)).collect(),
                });
            }
            let plot = PlotData {
                title: "incumbent trajectories".into(),
                x_label: "simulated time".into(),
                y_label: "regret".into(),
                series,
            };
            let json = out.join("trajectories.json");
            plot.write_json(create(&json)?).map_err(runtime)?;
            vec![csv, json]
        }
        Mode::Ranks => {
            let records = load_all(&args.records)?;
            let grouped = analysis::group_records(&records);
            if grouped.len() > 1 && !args.per_family {
                return Err(usage(analysis::AnalysisError::MixedBenchmarks(grouped.keys().cloned().collect())));
            }
            let grid = analysis::log_time_grid(1e-3, 1.0, args.grid_points.max(2));
            let mut sets = Vec::new();
            for by_opt in grouped.values() {
                let mut set = TrajectorySet::new();
                for (opt, runs) in by_opt {
                    let trajs = runs
                        .iter()
                        .map(|r| {
                            let t = analysis::record_regret(r)?;
                            Ok(scale_time(t, 1.0 / r.header.budget))
                        })
                        .collect::<Result<Vec<_>, analysis::AnalysisError>>()
                        .map_err(runtime)?;
                    set.insert(opt.clone(), trajs);
                }
                sets.push(set);
            }
            let ranks = analysis::rank_over_time(&sets, &grid).map_err(runtime)?;
            fs::create_dir_all(&out).map_err(runtime)?;
            let csv = out.join("ranks.csv");
            analysis::write_ranks_csv(&grid, &ranks, create(&csv)?).map_err(runtime)?;
            let mut plot = analysis::ranks_plot(&grid, &ranks);
            plot.x_label = "fraction of budget".into();
            let json = out.join("ranks.json");
            plot.write_json(create(&json)?).map_err(runtime)?;
            vec![csv, json]
        }
        Mode::Signtest => {
            let baseline = args.baseline.as_ref().ok_or_else(|| usage("signtest needs --baseline"))?;
            if args.challengers.is_empty() {
                return Err(usage("signtest needs --challengers"));
            }
            let records = load_all(&args.records)?;
            let results =
                analysis::compare_optimizers(&records, baseline, &args.challengers, &args.budget_fractions, args.alpha)
                    .map_err(runtime)?;
            fs::create_dir_all(&out).map_err(runtime)?;
            let csv = out.join("signtest.csv");
            analysis::write_signtest_csv(&results, create(&csv)?).map_err(runtime)?;
            vec![csv]
        }
    };
    Ok(written)
}

fn scale_time(mut t: analysis::Trajectory, factor: f64) -> analysis::Trajectory {
    for p in &mut t.points {
        p.time *= factor;
    }
    t
}

/// Seed-averaged default-metric values of every configuration at the
/// highest stored fidelity.
pub fn final_fidelity_values(store: &crate::benchmarks::TableStore) -> Result<Vec<f64>, BenchmarkError> {
    let top = store.fidelities().len().checked_sub(1).ok_or(BenchmarkError::EmptyTable)?;
    (0..store.configs().len())
        .map(|c| store.lookup_ids(c, top, crate::benchmarks::Seed::Average).map(|r| r.loss()))
        .collect()
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|s| {
            println!("wrote {} record(s), budget {}", s.records.len(), s.budget);
        }),
        Command::Tabulate(a) => cmd_tabulate(a).map(|n| {
            println!("wrote {n} rows to {}", a.out.display());
        }),
        Command::Analyze(a) => cmd_analyze(a).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
