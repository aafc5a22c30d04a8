//! Print the Hyperband brackets for a fidelity range.
//!
//! Usage: `cargo run --example hyperband_schedule -- [eta] [b_min] [b_max]`

use mfbench::optimizers::{hb_schedule, HBParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (eta, b_min, b_max) = match args[..] {
        [e, lo, hi] => (e, lo, hi),
        _ => (3.0, 1.0, 81.0),
    };
    let schedule = hb_schedule(&HBParams::new(eta, b_min, b_max)?);
    println!("eta {eta}, budget [{b_min}, {b_max}], s_max {}", schedule.s_max);
    for b in &schedule.brackets {
        let rungs: Vec<String> = b.rungs.iter().map(|r| format!("{}@{}", r.n_configs, r.fidelity)).collect();
        println!("  s={}: {}  (total {})", b.s, rungs.join(" -> "), b.total_budget());
    }
    Ok(())
}
