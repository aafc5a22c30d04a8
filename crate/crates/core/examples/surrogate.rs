//! Fit a k-NN surrogate on a table and query it off the grid.

use mfbench::benchmarks::{catalog, generate_table, Benchmark, Seed, SurrogateBenchmark};
use mfbench::configspace::GridBins;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = catalog::synthetic_quadratic(2)?;
    let store = generate_table(&raw, &GridBins::uniform(12), &GridBins::uniform(5), &[0, 1, 2])?;
    let surrogate = SurrogateBenchmark::fit(&store)?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let top = raw.search_fidelity_space().max_point();
    println!("{:>28}  {:>8}  {:>8}", "config", "raw", "surrogate");
    for _ in 0..5 {
        let c = surrogate.search_space().sample(&mut rng);
        let truth = raw.evaluate(&c, &top, Seed::Fixed(0))?.loss();
        let pred = surrogate.evaluate(&c, &top, Seed::Fixed(0))?.loss();
        println!("{:>28}  {truth:8.4}  {pred:8.4}", serde_json::to_string(&c)?);
    }
    Ok(())
}
