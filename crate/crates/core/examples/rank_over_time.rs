//! Mean rank over a shared log time grid, as CSV.

use mfbench::analysis::{log_time_grid, rank_over_time, record_regret, write_ranks_csv, TrajectorySet};
use mfbench::benchmarks::{catalog, Benchmark};
use mfbench::runner::{run_repetitions, OptimizerSpec, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bench = catalog::synthetic_quadratic(4)?;
    let budget = bench.default_budget()?;
    let mut set = TrajectorySet::new();
    for name in ["rs", "hb", "bohb", "de", "kde_bo"] {
        let runs = run_repetitions(&OptimizerSpec::new(name), &bench, budget, 8, 0, &RunOptions::default(), 4)?;
        let trajs = runs.iter().map(record_regret).collect::<Result<Vec<_>, _>>()?;
        set.insert(name.to_string(), trajs);
    }
    let grid = log_time_grid(budget / 1000.0, budget, 12);
    let ranks = rank_over_time(&[set], &grid)?;
    write_ranks_csv(&grid, &ranks, std::io::stdout())?;
    Ok(())
}
