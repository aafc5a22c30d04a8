//! List the builtin benchmarks and evaluate one across its fidelity range.

use mfbench::benchmarks::{catalog, Benchmark, Seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in catalog::builtin_names() {
        let b = catalog::builtin(&name)?;
        let d = b.descriptor();
        println!(
            "{name:<16} {} params, fidelities {:?}, budget {:.1}s",
            d.space.len(),
            d.fidelity_space.dims().iter().map(|f| f.name()).collect::<Vec<_>>(),
            b.default_budget()?
        );
    }

    let bench = catalog::builtin("xgboost")?;
    let config = bench.search_space().sample(&mut ChaCha8Rng::seed_from_u64(1));
    let fids = bench.search_fidelity_space().grid(&mfbench::configspace::GridBins::uniform(4))?;
    println!("\nxgboost at {}", serde_json::to_string(&config)?);
    for f in &fids {
        let r = bench.evaluate(&config, f, Seed::Fixed(0))?;
        println!("  {} -> loss {:.4}, cost {:.2}s", serde_json::to_string(f)?, r.loss(), r.cost);
    }
    Ok(())
}
