//! Sign tests of multi-fidelity optimizers against their black-box
//! counterparts on the synthetic suite, at three budget fractions.

use mfbench::analysis::{compare_optimizers, write_signtest_csv};
use mfbench::benchmarks::{catalog, Benchmark};
use mfbench::runner::{run_repetitions, OptimizerSpec, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut records = Vec::new();
    for bench in catalog::synthetic_suite()? {
        let budget = bench.default_budget()?;
        for name in ["rs", "hb", "de", "dehb"] {
            records.extend(run_repetitions(&OptimizerSpec::new(name), &bench, budget, 8, 0, &RunOptions::default(), 4)?);
        }
    }
    let fractions = [1.0, 0.1, 0.01];
    let mut results = compare_optimizers(&records, "rs", &["hb".into()], &fractions, 0.05)?;
    results.extend(compare_optimizers(&records, "de", &["dehb".into()], &fractions, 0.05)?);
    write_signtest_csv(&results, std::io::stdout())?;
    Ok(())
}
