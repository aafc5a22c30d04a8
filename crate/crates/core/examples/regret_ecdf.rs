//! Empirical CDF of normalized regret across a table's configurations.

use mfbench::analysis::ecdf_normalized_regret;
use mfbench::benchmarks::{catalog, generate_table};
use mfbench::cli::final_fidelity_values;
use mfbench::configspace::GridBins;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = catalog::builtin("randomforest")?;
    let store = generate_table(&raw, &GridBins::uniform(4), &GridBins::uniform(2), &[0, 1, 2])?;
    let values = final_fidelity_values(&store)?;
    let steps = ecdf_normalized_regret(&values)?;
    for q in [0.01, 0.05, 0.1, 0.25, 0.5] {
        let frac = steps.iter().take_while(|(v, _)| *v <= q).last().map_or(0.0, |s| s.1);
        println!("normalized regret <= {q:<5} for {:5.1}% of {} configurations", 100.0 * frac, values.len());
    }
    Ok(())
}
