//! Seeded repetitions of several optimizers, saved as run records.

use mfbench::benchmarks::{catalog, Benchmark};
use mfbench::runner::{load_records, run_repetitions, OptimizerSpec, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bench = catalog::builtin("logreg")?;
    let budget = bench.default_budget()?;
    let dir = std::env::temp_dir().join("mfbench-example-runs");
    std::fs::create_dir_all(&dir)?;

    for name in ["rs", "hb", "dehb"] {
        let records = run_repetitions(&OptimizerSpec::new(name), &bench, budget, 4, 0, &RunOptions::default(), 4)?;
        for r in &records {
            r.save(&dir)?;
        }
        let evals: usize = records.iter().map(|r| r.entries.len()).sum();
        println!("{name:<5} {} runs, {evals} evaluations", records.len());
    }
    let back = load_records(&dir)?;
    println!("{} records in {}", back.len(), dir.display());
    Ok(())
}
