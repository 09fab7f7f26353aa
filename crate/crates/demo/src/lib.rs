//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function has a plain Rust twin so the logic is tested
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;

use phidiv::divergence::cressie_read_eval;
use phidiv::experiment::{run_experiment, ExperimentConfig};
use phidiv::overdispersed::ClusterDistribution;
use phidiv::{data, fit_pmphi, FitOptions, PhiSpec};

/// `x, φ_λ(x)` pairs on `(0, x_max]`, flattened.
pub fn phi_curve_points(lambda: f64, x_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(x_max > 0.0) || points < 2 {
        return Err("need x_max > 0 and at least two points".into());
    }
    let mut out = Vec::with_capacity(2 * points);
    for k in 1..=points {
        let x = x_max * k as f64 / points as f64;
        out.push(x);
        out.push(cressie_read_eval(lambda, x).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// Coefficients of the Family Expenditure model for one `λ`.
pub fn family_expenditure_fit(lambda: f64) -> Result<Vec<f64>, String> {
    let fit = fit_pmphi(
        &data::family_expenditure(),
        &PhiSpec::cressie_read(lambda),
        &FitOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err(format!("no convergence for lambda = {lambda}"));
    }
    Ok(fit.beta.iter().copied().collect())
}

/// Aggregate RMSE on `ρ = 0, 0.1, …, 0.9` for each `λ`, row-major by `λ`.
pub fn rmse_by_rho(dist: &str, lambdas: &[f64], replicates: usize, seed: u64) -> Result<Vec<f64>, String> {
    let dist: ClusterDistribution = dist.parse().map_err(|e: phidiv::Error| e.to_string())?;
    let config = ExperimentConfig {
        distributions: vec![dist],
        lambda_grid: lambdas.to_vec(),
        replicates,
        ..ExperimentConfig::family_expenditure(seed)
    };
    let rows = run_experiment(&config).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(rows.len());
    for &lambda in lambdas {
        out.extend(rows.iter().filter(|r| r.lambda == lambda).map(|r| r.rmse));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn phi_curve(lambda: f64, x_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    phi_curve_points(lambda, x_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_family_expenditure(lambda: f64) -> Result<Vec<f64>, JsError> {
    family_expenditure_fit(lambda).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn coefficient_names() -> Vec<String> {
    data::COEFFICIENT_NAMES.iter().map(|s| s.to_string()).collect()
}

#[wasm_bindgen]
pub fn rmse_study(dist: &str, lambdas: &[f64], replicates: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    rmse_by_rho(dist, lambdas, replicates, u64::from(seed)).map_err(|e| JsError::new(&e))
}
