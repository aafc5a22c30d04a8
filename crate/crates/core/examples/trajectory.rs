//! Incumbent and regret trajectories of a multi-fidelity run.

use mfbench::analysis::{compute_regret, compute_trajectory};
use mfbench::benchmarks::catalog;
use mfbench::runner::{run_single, OptimizerSpec, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bench = catalog::synthetic_quadratic(2)?;
    let record = run_single(&OptimizerSpec::new("hb"), &bench, 2000.0, 1, &RunOptions::default())?;
    let traj = compute_trajectory(&record);
    let regret = compute_regret(&traj, record.header.known_best)?;
    println!("{} evaluations, {} incumbent changes", record.entries.len(), traj.points.len());
    for (p, r) in traj.points.iter().zip(&regret.values) {
        println!("{:9.2}s  {}  loss {:.5}  regret {r:.5}", p.time, serde_json::to_string(&p.fidelity)?, p.loss);
    }
    Ok(())
}
