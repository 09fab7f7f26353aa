//! Estimators and their asymptotic covariance.
//!
//! [`fit_pmphi`] minimises `β ↦ d_φ(p̂_w, p_w(β))` by damped Newton with an
//! Armijo backtracking line search. [`fit_pmle_irls`] solves the weighted
//! score equations `Xᵀ diag(w) π(β) = Xᵀ diag(w) p̂` by iteratively
//! reweighted least squares; it shares no code with the Newton path beyond
//! the logistic function, so the two can be checked against each other.

use nalgebra::{DMatrix, DVector};

use crate::divergence::{cell_term, PhiSpec};
use crate::error::{Error, Result};
use crate::glm::{logistic, pi_pairs, validate_design, ClusterTable, SurveyDataset};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_NEWTON_ITER: usize = 100;
pub const DEFAULT_IRLS_ITER: usize = 50;

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;
/// Linear predictors beyond this saturate the logistic in double precision.
const SATURATED_ETA: f64 = 36.0;
/// A vanishing gradient with a Newton step this long means the minimiser
/// lies at infinity.
const DIVERGING_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DivergenceMinimization,
    Irls,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Starting point. `None` means zero for IRLS and the IRLS fit for the
    /// divergence minimiser.
    pub init: Option<DVector<f64>>,
    /// Convergence threshold on the sup-norm of the gradient (or score).
    pub tol: f64,
    /// Iteration cap. `None` picks the per-method default.
    pub max_iter: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init: None,
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl FitOptions {
    pub fn with_init(init: DVector<f64>) -> Self {
        FitOptions {
            init: Some(init),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    /// Divergence at `beta` (Kullback–Leibler for IRLS).
    pub objective: f64,
    /// Sup-norm of the objective gradient at `beta`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
    /// Objective value after each accepted iterate, starting at the init.
    pub trace: Vec<f64>,
    pub diagnostic: Option<String>,
}

struct DomainParts {
    /// `∂D/∂η_i`.
    score: f64,
    /// `∂²D/∂η_i²`.
    curvature: f64,
}

fn check_beta(dataset: &SurveyDataset, beta: &DVector<f64>) -> Result<()> {
    if beta.len() != dataset.n_params() {
        return Err(Error::Usage(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            dataset.n_params()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain("beta has non-finite entries".into()));
    }
    Ok(())
}

/// `d_φ(p̂_w, p_w(β))`; may be `+∞` at the boundary.
pub fn objective(dataset: &SurveyDataset, phi: &PhiSpec, beta: &DVector<f64>) -> Result<f64> {
    check_beta(dataset, beta)?;
    let pairs = pi_pairs(dataset.design(), beta)?;
    Ok(dataset
        .weights()
        .iter()
        .zip(dataset.p_hat())
        .zip(pairs)
        .map(|((&w, &p), (pi, pi_c))| {
            cell_term(w * p, w * pi, phi) + cell_term(w * (1.0 - p), w * pi_c, phi)
        })
        .sum())
}

/// `u² φ''(u)`, taken as zero at `u = 0`.
fn curvature_term(phi: &PhiSpec, u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u * phi.second(u)
    }
}

fn ratio(data: f64, model: f64) -> Result<f64> {
    if model > 0.0 {
        Ok(data / model)
    } else if data == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Infeasible(
            "model probability underflowed to zero in a cell holding data".into(),
        ))
    }
}

fn domain_parts(dataset: &SurveyDataset, phi: &PhiSpec, beta: &DVector<f64>, with_curvature: bool) -> Result<Vec<DomainParts>> {
    check_beta(dataset, beta)?;
    let pairs = pi_pairs(dataset.design(), beta)?;
    let mut parts = Vec::with_capacity(pairs.len());
    for ((&w, &p), (pi, pi_c)) in dataset.weights().iter().zip(dataset.p_hat()).zip(pairs) {
        let u_s = ratio(p, pi)?;
        let u_f = ratio(1.0 - p, pi_c)?;
        let t_s = phi.tangent_intercept(u_s);
        let t_f = phi.tangent_intercept(u_f);
        if !(t_s.is_finite() && t_f.is_finite()) {
            return Err(Error::Infeasible("divergence is infinite at this beta".into()));
        }
        let dpi = pi * pi_c;
        let d_pi = w * (t_s - t_f);
        let curvature = if with_curvature {
            let second = w * (curvature_term(phi, u_s) / pi + curvature_term(phi, u_f) / pi_c);
            second * dpi * dpi + d_pi * dpi * (pi_c - pi)
        } else {
            0.0
        };
        parts.push(DomainParts {
            score: d_pi * dpi,
            curvature,
        });
    }
    Ok(parts)
}

/// Gradient of [`objective`] with respect to `β`.
pub fn objective_gradient(dataset: &SurveyDataset, phi: &PhiSpec, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let parts = domain_parts(dataset, phi, beta, false)?;
    let r = DVector::from_iterator(parts.len(), parts.iter().map(|p| p.score));
    Ok(dataset.design().tr_mul(&r))
}

/// Gradient and Hessian of [`objective`].
pub fn objective_gradient_hessian(
    dataset: &SurveyDataset,
    phi: &PhiSpec,
    beta: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let parts = domain_parts(dataset, phi, beta, true)?;
    let x = dataset.design();
    let r = DVector::from_iterator(parts.len(), parts.iter().map(|p| p.score));
    let mut weighted = x.clone();
    for (i, p) in parts.iter().enumerate() {
        weighted.row_mut(i).scale_mut(p.curvature);
    }
    Ok((x.tr_mul(&r), x.tr_mul(&weighted)))
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Pseudo minimum phi-divergence estimate.
pub fn fit_pmphi(dataset: &SurveyDataset, phi: &PhiSpec, options: &FitOptions) -> Result<FitResult> {
    if !(options.tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    let max_iter = options.max_iter.unwrap_or(DEFAULT_NEWTON_ITER);
    let mut beta = match &options.init {
        Some(init) => {
            check_beta(dataset, init)?;
            init.clone()
        }
        None => {
            let start = fit_pmle_irls(dataset, &FitOptions::default())?;
            if start.beta.iter().all(|b| b.is_finite()) {
                start.beta
            } else {
                DVector::zeros(dataset.n_params())
            }
        }
    };

    let mut f = objective(dataset, phi, &beta)?;
    if !f.is_finite() {
        return Err(Error::Infeasible("objective is infinite at the starting point".into()));
    }
    let mut trace = vec![f];
    let mut diagnostic = None;
    let mut iterations = 0;

    loop {
        let (grad, hess) = objective_gradient_hessian(dataset, phi, &beta)?;
        let grad_norm = sup_norm(&grad);
        let newton = hess.cholesky().map(|c| -c.solve(&grad));
        if grad_norm < options.tol {
            let step = newton.as_ref().map_or(0.0, sup_norm);
            let (converged, diagnostic) = if step > DIVERGING_STEP {
                (
                    false,
                    Some(format!(
                        "gradient vanished but the Newton step is {step:.3e}; minimiser at infinity"
                    )),
                )
            } else {
                (true, diagnostic)
            };
            return Ok(FitResult {
                beta,
                objective: f,
                grad_norm,
                iterations,
                converged,
                method: Method::DivergenceMinimization,
                trace,
                diagnostic,
            });
        }
        if iterations >= max_iter {
            return Ok(FitResult {
                beta,
                objective: f,
                grad_norm,
                iterations,
                converged: false,
                method: Method::DivergenceMinimization,
                trace,
                diagnostic: Some(format!(
                    "no convergence after {max_iter} iterations (gradient sup-norm {grad_norm:.3e})"
                )),
            });
        }
        iterations += 1;

        let mut direction = match newton {
            Some(d) if grad.dot(&d) < 0.0 => d,
            _ => {
                diagnostic = Some("Hessian not positive definite; took gradient steps".into());
                -grad.clone()
            }
        };
        let mut slope = grad.dot(&direction);
        if !(slope < 0.0) {
            direction = -grad.clone();
            slope = grad.dot(&direction);
        }

        let mut step = 1.0;
        let accepted = loop {
            let candidate = &beta + &direction * step;
            let fc = objective(dataset, phi, &candidate)?;
            if fc.is_finite() {
                let armijo = fc <= f + ARMIJO_SLOPE * step * slope;
                // Near the optimum the predicted decrease falls below the
                // rounding of `f`; a tie at rounding level is not an ascent.
                let tie = step == 1.0 && fc - f <= 8.0 * f64::EPSILON * f.abs();
                if armijo || tie {
                    break Some((candidate, fc));
                }
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((candidate, fc)) => {
                beta = candidate;
                f = fc;
                trace.push(f);
            }
            None => {
                return Ok(FitResult {
                    beta,
                    objective: f,
                    grad_norm,
                    iterations,
                    converged: false,
                    method: Method::DivergenceMinimization,
                    trace,
                    diagnostic: Some("line search failed to find a descent step".into()),
                });
            }
        }
    }
}

/// Pseudo maximum likelihood estimate by weighted IRLS.
pub fn fit_pmle_irls(dataset: &SurveyDataset, options: &FitOptions) -> Result<FitResult> {
    if !(options.tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    let max_iter = options.max_iter.unwrap_or(DEFAULT_IRLS_ITER);
    let x = dataset.design();
    let w = dataset.weights();
    let p_hat = dataset.p_hat();
    let mut beta = match &options.init {
        Some(init) => {
            check_beta(dataset, init)?;
            init.clone()
        }
        None => DVector::zeros(dataset.n_params()),
    };
    let kl = PhiSpec::kullback_leibler();
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let eta = x * &beta;
        let mu = eta.map(logistic);
        let residual = DVector::from_iterator(
            mu.len(),
            (0..mu.len()).map(|i| w[i] * (mu[i] - p_hat[i])),
        );
        let score_norm = sup_norm(&x.tr_mul(&residual));
        let objective = objective(dataset, &kl, &beta)?;
        trace.push(objective);

        // Working weights and response of the weighted least-squares step.
        let mut xtw = x.transpose();
        let mut z = DVector::zeros(mu.len());
        for i in 0..mu.len() {
            let var = mu[i] * (1.0 - mu[i]);
            xtw.column_mut(i).scale_mut(w[i] * var);
            z[i] = eta[i] + (p_hat[i] - mu[i]) / var;
        }
        let next = (&xtw * x).cholesky().map(|chol| chol.solve(&(&xtw * z)));

        let failure = match next {
            Some(next) if score_norm < options.tol => {
                let step = sup_norm(&(&next - &beta));
                if step > DIVERGING_STEP {
                    Some(format!(
                        "coefficients still moving by {step:.3e} per iteration; possible separation"
                    ))
                } else {
                    None
                }
            }
            _ if iterations >= max_iter => Some(format!(
                "no convergence after {max_iter} IRLS iterations (score sup-norm {score_norm:.3e})"
            )),
            _ if eta.iter().any(|e| e.abs() > SATURATED_ETA) => {
                Some("fitted probabilities numerically 0 or 1; possible separation".to_string())
            }
            Some(next) => {
                beta = next;
                iterations += 1;
                continue;
            }
            None if score_norm < options.tol => None,
            None => Some("weighted normal equations are singular".to_string()),
        };

        let converged = failure.is_none();
        return Ok(FitResult {
            beta,
            objective,
            grad_norm: score_norm,
            iterations,
            converged,
            method: Method::Irls,
            trace,
            diagnostic: failure,
        });
    }
}

/// Sandwich covariance of `√n (β̂ - β₀)` and its ingredients.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub v_beta: DMatrix<f64>,
    pub v_input: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

fn check_population_weights(big_w: &[f64], domains: usize) -> Result<()> {
    if big_w.len() != domains {
        return Err(Error::Usage(format!(
            "{} population weights for {domains} domains",
            big_w.len()
        )));
    }
    if big_w.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("population weights must be positive".into()));
    }
    let total: f64 = big_w.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("population weights must sum to 1; got {total}")));
    }
    Ok(())
}

/// `(XᵀΔX)⁻¹ Xᵀ diag(W) V diag(W) X (XᵀΔX)⁻¹` with `Δ = diag(W_i π_i (1 - π_i))`.
pub fn asymptotic_covariance(
    x: &DMatrix<f64>,
    big_w: &[f64],
    v: &DMatrix<f64>,
    beta0: &DVector<f64>,
) -> Result<CovarianceEstimate> {
    validate_design(x)?;
    let domains = x.nrows();
    check_population_weights(big_w, domains)?;
    if v.shape() != (domains, domains) {
        return Err(Error::Usage(format!(
            "input covariance is {:?}, expected {domains}x{domains}",
            v.shape()
        )));
    }
    let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
    if (v - v.transpose()).iter().any(|d| d.abs() > 1e-10 * scale) {
        return Err(Error::Domain("input covariance is not symmetric".into()));
    }
    let pairs = pi_pairs(x, beta0)?;
    let delta = DMatrix::from_diagonal(&DVector::from_iterator(
        domains,
        pairs.iter().zip(big_w).map(|((p, q), w)| w * p * q),
    ));
    let bread = x.tr_mul(&(&delta * x));
    let bread_inv = bread
        .cholesky()
        .ok_or_else(|| Error::Singular("XᵀΔX is not invertible".into()))?
        .inverse();
    let wx = DMatrix::from_fn(domains, x.ncols(), |r, c| big_w[r] * x[(r, c)]);
    let meat = wx.tr_mul(&(v * &wx));
    let sandwich = &bread_inv * meat * &bread_inv;
    let v_beta = (&sandwich + sandwich.transpose()) * 0.5;
    Ok(CovarianceEstimate {
        v_beta,
        v_input: v.clone(),
        delta,
    })
}

/// Covariance of `√n (p̂ - π)` under independent binomial sampling:
/// `diag(π_i (1 - π_i) / W_i)`.
pub fn binomial_input_covariance(pi: &[f64], big_w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        pi.len(),
        pi.iter().zip(big_w).map(|(p, w)| p * (1.0 - p) / w),
    ))
}

/// Between-cluster estimate of the covariance of `√n (p̂ - π)`.
///
/// Each domain proportion is a ratio estimator `p̂_i = y_i / n_i` summed
/// over clusters; its linearised per-cluster contribution is
/// `z_ij = (y_ij - p̂_i n_ij) / n_i`, and the estimate is
/// `n · J/(J-1) · Σ_j z_j z_jᵀ`.
pub fn estimate_v_from_clusters(table: &ClusterTable) -> Result<DMatrix<f64>> {
    let clusters = table.clusters();
    if clusters < 2 {
        return Err(Error::Usage("at least two clusters are needed".into()));
    }
    let totals = table.domain_counts();
    if let Some(i) = totals.iter().position(|c| c.total == 0) {
        return Err(Error::Degenerate(format!("domain {} has no observations", i + 1)));
    }
    let domains = totals.len();
    let n = table.total() as f64;
    let p_hat: Vec<f64> = totals
        .iter()
        .map(|c| c.successes as f64 / c.total as f64)
        .collect();
    let mut v = DMatrix::zeros(domains, domains);
    for row in table.rows() {
        let z = DVector::from_fn(domains, |i, _| {
            let y = row[2 * i] as f64;
            let m = (row[2 * i] + row[2 * i + 1]) as f64;
            (y - p_hat[i] * m) / totals[i].total as f64
        });
        v += &z * z.transpose();
    }
    let factor = n * clusters as f64 / (clusters as f64 - 1.0);
    Ok(v * factor)
}
