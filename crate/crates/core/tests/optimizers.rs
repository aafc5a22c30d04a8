use std::sync::Arc;

use mfbench::benchmarks::catalog;
use mfbench::benchmarks::{generate_table, Benchmark, SeedMode, TabularBenchmark};
use mfbench::configspace::GridBins;
use mfbench::optimizers::OPTIMIZER_NAMES;
use mfbench::runner::{run_single, OptimizerSpec, RunOptions};

fn check_legal(bench: &dyn Benchmark, budget_factor: f64) {
    let budget = budget_factor * bench.default_budget().unwrap() / 100.0;
    for name in OPTIMIZER_NAMES {
        for seed in 0..2 {
            let spec = OptimizerSpec::new(name);
            let a = run_single(&spec, bench, budget, seed, &RunOptions::default()).unwrap();
            assert!(!a.failed(), "{name} on {}: {:?}", bench.descriptor().name, a.header.failure);
            assert!(!a.entries.is_empty());
            for e in &a.entries {
                bench.search_space().validate(&e.config).unwrap();
                bench.search_fidelity_space().validate(&e.fidelity).unwrap();
            }
            let b = run_single(&spec, bench, budget, seed, &RunOptions::default()).unwrap();
            assert_eq!(a, b, "{name} is not reproducible");
        }
    }
}

#[test]
fn every_optimizer_stays_legal_on_every_builtin() {
    for name in catalog::builtin_names() {
        let bench = catalog::builtin(&name).unwrap();
        check_legal(&bench, 15.0);
    }
}

#[test]
fn every_optimizer_stays_on_the_table_grid() {
    let raw = catalog::builtin("xgboost").unwrap();
    let store = generate_table(&raw, &GridBins::uniform(3), &GridBins::uniform(3), &[0, 1]).unwrap();
    let tab = TabularBenchmark::new(Arc::new(store), SeedMode::PerSeed).unwrap();
    check_legal(&tab, 30.0);
}

#[test]
fn black_box_optimizers_only_query_max_fidelity() {
    let bench = catalog::builtin("synth-quad-3d").unwrap();
    let max = bench.search_fidelity_space().max_point();
    for name in ["rs", "de", "kde_bo"] {
        let r = run_single(&OptimizerSpec::new(name), &bench, 500.0, 3, &RunOptions::default()).unwrap();
        assert!(r.entries.iter().all(|e| e.fidelity == max), "{name}");
    }
    let hb = run_single(&OptimizerSpec::new("hb"), &bench, 500.0, 3, &RunOptions::default()).unwrap();
    assert!(hb.entries.iter().any(|e| e.fidelity != max));
}
