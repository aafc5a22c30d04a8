//! Build a mixed search space, sample it, encode to the unit cube and grid it.

use mfbench::configspace::{ConfigurationSpace, GridBins, HyperparameterSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = ConfigurationSpace::new(vec![
        HyperparameterSpec::float("learning_rate", 1e-5, 1.0, true)?,
        HyperparameterSpec::int("max_depth", 1, 50, true)?,
        HyperparameterSpec::categorical("booster", ["gbtree", "dart"])?,
    ])?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..3 {
        let config = space.sample(&mut rng);
        let unit = space.to_unit_vec(&config)?;
        let back = space.from_unit_vec(&unit)?;
        println!("{}", serde_json::to_string(&config)?);
        println!("  unit {unit:.3?} -> {}", serde_json::to_string(&back)?);
    }

    let grid = space.discretize_grid(&GridBins::uniform(4).with("max_depth", 3))?;
    println!("grid with 4 bins (3 for max_depth): {} configurations", grid.len());
    Ok(())
}
