//! Turn a raw benchmark into a lookup table, save it and query it.

use std::sync::Arc;

use mfbench::benchmarks::{catalog, generate_table, read_store, write_store, Benchmark, Seed, SeedMode, TabularBenchmark};
use mfbench::configspace::GridBins;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = catalog::builtin("svm")?;
    let store = generate_table(&raw, &GridBins::uniform(5), &GridBins::uniform(4), &[0, 1, 2, 3, 4])?;
    println!("{} rows, {} configurations", store.len(), store.configs().len());

    let dir = std::env::temp_dir().join("mfbench-example-table");
    write_store(&store, &dir)?;
    let store = Arc::new(read_store(&dir)?);
    println!("stored in {}, default budget {:.1}s", dir.display(), store.default_budget()?);

    let table = TabularBenchmark::new(store.clone(), SeedMode::Average)?;
    let config = &store.configs()[7];
    // noise vanishes at the top fidelity, so look at the lowest one
    let low = store.fidelities()[0].clone();
    let avg = table.evaluate(config, &low, Seed::Average)?;
    let one = table.evaluate(config, &low, Seed::Fixed(3))?;
    let raw_one = raw.evaluate(config, &low, Seed::Fixed(3))?;
    println!("seed average {:.5}, seed 3 {:.5}, raw seed 3 {:.5}", avg.loss(), one.loss(), raw_one.loss());
    println!("best at max fidelity: {:?}", store.best_at_max_fidelity()?);
    Ok(())
}
