//! Drive an optimizer by hand through the ask/tell interface.

use mfbench::benchmarks::{catalog, Benchmark, Seed};
use mfbench::optimizers::{build_optimizer, Observation, ParamOverrides, Problem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bench = catalog::synthetic_quadratic(3)?;
    let problem = Problem::from_benchmark(&bench);
    let mut overrides = ParamOverrides::new();
    overrides.insert("eta".into(), "3".into());
    let mut opt = build_optimizer("bohb", &overrides, &problem, 7)?;
    println!("{} with {:?}", opt.name(), opt.params());

    let mut clock = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..200 {
        let Some(proposal) = opt.ask() else { break };
        let result = bench.evaluate(&proposal.config, &proposal.fidelity, Seed::Fixed(i))?;
        clock += result.cost;
        if bench.search_fidelity_space().is_max(&proposal.fidelity) && result.loss() < best {
            best = result.loss();
            println!("{clock:8.1}s  {:<14} new best {best:.5}", proposal.tag);
        }
        opt.tell(&Observation {
            proposal,
            result,
            sim_time_at_finish: clock,
        })?;
    }
    Ok(())
}
