//! Builtin spaces and benchmarks.
//!
//! The five model families (`svm`, `logreg`, `xgboost`, `randomforest`,
//! `mlp`) carry their published hyperparameter and fidelity ranges, wired to
//! synthetic objectives so that every space-handling path can be exercised
//! without datasets. The `synth-quad-<d>d` family is a plain multi-fidelity
//! quadratic over `d` unit parameters with an `epochs` fidelity in `[1, 81]`.

use super::{BenchmarkError, SyntheticBenchmark, SyntheticParams};
use crate::configspace::{ConfigurationSpace, FidelitySpace, GridBins, HyperparameterSpec, SpaceError};

/// Metric names of the model families, stored as `1 - score`.
pub const FAMILY_METRICS: [&str; 4] = ["accuracy", "balanced_accuracy", "precision", "f1"];

pub const FAMILIES: [&str; 5] = ["svm", "logreg", "xgboost", "randomforest", "mlp"];

pub const SYNTHETIC_DIMS: [usize; 6] = [1, 2, 3, 4, 6, 8];

fn f(name: &str, lo: f64, hi: f64, log: bool) -> Result<HyperparameterSpec, SpaceError> {
    HyperparameterSpec::float(name, lo, hi, log)
}

fn i(name: &str, lo: i64, hi: i64, log: bool) -> Result<HyperparameterSpec, SpaceError> {
    HyperparameterSpec::int(name, lo, hi, log)
}

/// Hyperparameter and fidelity space of a model family.
pub fn family_spaces(family: &str) -> Result<(ConfigurationSpace, FidelitySpace), BenchmarkError> {
    let p2 = 2f64.powi(-10);
    let p10 = 2f64.powi(10);
    let sub = || f("subsample", 0.1, 1.0, false);
    let (params, fids) = match family {
        "svm" => (vec![f("C", p2, p10, true)?, f("gamma", p2, p10, true)?], vec![sub()?]),
        "logreg" => (
            vec![f("alpha", 1e-5, 1.0, true)?, f("eta0", 1e-5, 1.0, true)?],
            vec![i("iter", 10, 1000, false)?, sub()?],
        ),
        "xgboost" => (
            vec![
                f("colsample_bytree", 0.1, 1.0, false)?,
                f("eta", p2, 1.0, true)?,
                i("max_depth", 1, 50, true)?,
                f("reg_lambda", p2, p10, true)?,
            ],
            vec![i("n_estimators", 50, 2000, false)?, sub()?],
        ),
        "randomforest" => (
            vec![
                i("max_depth", 1, 50, true)?,
                f("max_features", 0.0, 1.0, false)?,
                i("min_samples_leaf", 1, 2, false)?,
                i("min_samples_split", 2, 128, true)?,
            ],
            vec![i("n_estimators", 16, 512, false)?, sub()?],
        ),
        "mlp" => (
            vec![
                f("alpha", 1e-8, 1.0, true)?,
                i("batch_size", 4, 256, true)?,
                i("depth", 1, 3, false)?,
                f("learning_rate_init", 1e-5, 1.0, true)?,
                i("width", 16, 1024, true)?,
            ],
            vec![i("epochs", 3, 243, false)?, sub()?],
        ),
        other => return Err(BenchmarkError::UnknownBenchmark(other.to_string())),
    };
    Ok((ConfigurationSpace::new(params)?, FidelitySpace::new(fids)?))
}

/// Bins used when tabulating a family: 21 for `svm`, 25 for `logreg`, 10
/// per parameter otherwise.
pub fn family_bins(family: &str) -> GridBins {
    match family {
        "svm" => GridBins::uniform(21),
        "logreg" => GridBins::uniform(25),
        _ => GridBins::uniform(10),
    }
}

/// Deterministic, irregular fixture values in `[lo, hi]`.
fn spread(d: usize, salt: f64, lo: f64, hi: f64) -> Vec<f64> {
    const GOLDEN: f64 = 0.618_033_988_749_895;
    (0..d)
        .map(|k| lo + (hi - lo) * ((k as f64 + 1.0) * GOLDEN + salt).fract())
        .collect()
}

fn family_params(d: usize, salt: f64) -> SyntheticParams {
    let optimum = spread(d, salt, 0.2, 0.8);
    let bias_shift = optimum.iter().map(|o| (o + 0.15).min(1.0)).collect();
    SyntheticParams {
        weights: spread(d, salt + 0.3, 0.5, 1.5),
        optimum,
        bias_base: 0.05,
        bias_curvature: 0.2,
        bias_shift,
        noise: 0.02,
        cost_scale: 10.0,
        cost_exponent: 1.0,
        metrics: FAMILY_METRICS.iter().map(|s| s.to_string()).collect(),
    }
}

/// A model family wired to a synthetic objective.
pub fn family_benchmark(family: &str) -> Result<SyntheticBenchmark, BenchmarkError> {
    let (space, fids) = family_spaces(family)?;
    let salt = FAMILIES.iter().position(|f| *f == family).unwrap_or(0) as f64 * 0.17;
    let params = family_params(space.len(), salt);
    SyntheticBenchmark::new(family, space, fids, params)
}

/// Synthetic quadratic with `dim` parameters `x0..`, fidelity `epochs` in
/// `[1, 81]` and informative low fidelities.
pub fn synthetic_quadratic(dim: usize) -> Result<SyntheticBenchmark, BenchmarkError> {
    let params = (0..dim)
        .map(|k| f(&format!("x{k}"), 0.0, 1.0, false))
        .collect::<Result<Vec<_>, _>>()?;
    let space = ConfigurationSpace::new(params)?;
    let fids = FidelitySpace::single(i("epochs", 1, 81, false)?)?;
    let salt = dim as f64 * 0.071;
    let optimum = spread(dim, salt, 0.15, 0.85);
    let bias_shift = optimum.iter().map(|o| (o + 0.1).min(1.0)).collect();
    let p = SyntheticParams {
        weights: spread(dim, salt + 0.5, 0.5, 1.5),
        optimum,
        bias_base: 0.02,
        bias_curvature: 0.1,
        bias_shift,
        noise: 0.01,
        cost_scale: 10.0,
        cost_exponent: 1.0,
        metrics: vec!["loss".to_string()],
    };
    SyntheticBenchmark::new(format!("synth-quad-{dim}d"), space, fids, p)
}

/// The five-benchmark synthetic suite used for optimizer comparisons.
pub fn synthetic_suite() -> Result<Vec<SyntheticBenchmark>, BenchmarkError> {
    [2, 3, 4, 6, 8].into_iter().map(synthetic_quadratic).collect()
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> Vec<String> {
    let mut names: Vec<String> = SYNTHETIC_DIMS.iter().map(|d| format!("synth-quad-{d}d")).collect();
    names.extend(FAMILIES.iter().map(|s| s.to_string()));
    names
}

/// Looks up a builtin raw benchmark by name.
pub fn builtin(name: &str) -> Result<SyntheticBenchmark, BenchmarkError> {
    if let Some(d) = name
        .strip_prefix("synth-quad-")
        .and_then(|s| s.strip_suffix('d'))
        .and_then(|s| s.parse::<usize>().ok())
    {
        if SYNTHETIC_DIMS.contains(&d) {
            return synthetic_quadratic(d);
        }
    }
    if FAMILIES.contains(&name) {
        return family_benchmark(name);
    }
    Err(BenchmarkError::UnknownBenchmark(name.to_string()))
}
