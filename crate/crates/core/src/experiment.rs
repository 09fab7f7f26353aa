//! Monte-Carlo RMSE study over cluster distributions, `ρ` and `λ`.
//!
//! Replicate `r` always draws from stream `r` of the configured seed, for
//! every distribution and every `ρ`. Grid cells therefore share common
//! random numbers, and at `ρ = 0` all three distributions see the very same
//! samples. Sums of squares are accumulated in replicate order, so the
//! output does not depend on how replicates are scheduled across threads.

use nalgebra::{DMatrix, DVector};

use crate::divergence::PhiSpec;
use crate::error::{Error, Result};
use crate::estimation::{fit_pmle_irls, fit_pmphi, FitOptions};
use crate::glm::SurveyDataset;
use crate::overdispersed::{
    balanced_sizes, replicate_rng, simulate_survey_with, ClusterDistribution, ClusterSampleConfig,
};

/// Share of non-converged fits above which a row fails the health check.
pub const MAX_EXCLUDED_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub distributions: Vec<ClusterDistribution>,
    pub rho_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
    /// Centre of the RMSE; `None` uses [`pseudo_true_beta`] of `cells`.
    pub beta0: Option<Vec<f64>>,
    pub cluster_sizes: Vec<u64>,
    /// Theoretical `2I` cell probabilities.
    pub cells: Vec<f64>,
    pub design: DMatrix<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Full grids over the Family Expenditure layout: three distributions,
    /// `ρ ∈ {0, 0.1, …, 0.9}`, `λ ∈ {0, 2/3, 1, 2}`, 2000 replicates.
    pub fn family_expenditure(seed: u64) -> Self {
        ExperimentConfig {
            distributions: ClusterDistribution::ALL.to_vec(),
            rho_grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            lambda_grid: vec![0.0, 2.0 / 3.0, 1.0, 2.0],
            replicates: 2000,
            beta0: None,
            cluster_sizes: balanced_sizes(50, crate::data::TOTAL_HOUSEHOLDS).expect("static layout"),
            cells: crate::data::cell_probabilities(),
            design: crate::data::design(),
            seed,
        }
    }

    /// 500 replicates on the coarse grid `ρ ∈ {0, 0.3, 0.6, 0.9}`.
    pub fn desk(seed: u64) -> Self {
        ExperimentConfig {
            rho_grid: vec![0.0, 0.3, 0.6, 0.9],
            replicates: 500,
            ..Self::family_expenditure(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Usage("replicates must be at least 1".into()));
        }
        if self.distributions.is_empty() || self.rho_grid.is_empty() || self.lambda_grid.is_empty() {
            return Err(Error::Usage("distribution, rho and lambda grids must be non-empty".into()));
        }
        for dist in &self.distributions {
            for &rho in &self.rho_grid {
                dist.check_rho(rho)?;
            }
        }
        if self.lambda_grid.iter().any(|l| !l.is_finite()) {
            return Err(Error::Usage("lambda values must be finite".into()));
        }
        if self.cells.len() != 2 * self.design.nrows() {
            return Err(Error::Usage(format!(
                "{} cell probabilities for {} domains",
                self.cells.len(),
                self.design.nrows()
            )));
        }
        if let Some(b) = &self.beta0 {
            if b.len() != self.design.ncols() {
                return Err(Error::Usage(format!(
                    "beta0 has {} entries, design has {} columns",
                    b.len(),
                    self.design.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn sample_config(&self, dist: ClusterDistribution, rho: f64) -> ClusterSampleConfig {
        ClusterSampleConfig {
            sizes: self.cluster_sizes.clone(),
            rho,
            p: self.cells.clone(),
            dist,
            seed: self.seed,
        }
    }

    /// The RMSE centre: `beta0` if given, else the pseudo-true parameter.
    pub fn centre(&self) -> Result<DVector<f64>> {
        match &self.beta0 {
            Some(b) => Ok(DVector::from_column_slice(b)),
            None => pseudo_true_beta(&self.cells, &self.design),
        }
    }
}

/// Aggregated RMSE for one `(distribution, ρ, λ)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResultRow {
    pub dist: ClusterDistribution,
    pub rho: f64,
    pub lambda: f64,
    pub replicates_used: usize,
    /// Samples discarded because a domain was empty, summed over replicates.
    pub redraws: usize,
    pub nonconverged: usize,
    pub rmse: f64,
    pub rmse_per_coefficient: Vec<f64>,
}

impl ExperimentResultRow {
    pub fn excluded_share(&self) -> f64 {
        self.nonconverged as f64 / (self.replicates_used + self.nonconverged) as f64
    }
}

/// Kullback–Leibler projection of a `2I`-cell probability vector onto the
/// logistic model with weights `W_i = p_{i1} + p_{i2}`.
pub fn pseudo_true_beta(cells: &[f64], x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if cells.len() != 2 * x.nrows() {
        return Err(Error::Usage(format!(
            "{} cells for {} domains",
            cells.len(),
            x.nrows()
        )));
    }
    let raw: Vec<f64> = cells.chunks(2).map(|c| c[0] + c[1]).collect();
    let props: Vec<f64> = cells
        .chunks(2)
        .map(|c| if c[0] + c[1] > 0.0 { c[0] / (c[0] + c[1]) } else { 0.0 })
        .collect();
    let dataset = SurveyDataset::from_raw_weights(x.clone(), &raw, props)?;
    let fit = fit_pmle_irls(&dataset, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::Usage(format!(
            "pseudo-true fit did not converge: {}",
            fit.diagnostic.unwrap_or_default()
        )));
    }
    Ok(fit.beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rmse {
    pub aggregate: f64,
    pub per_coefficient: Vec<f64>,
}

/// Accumulates squared errors in insertion order.
#[derive(Debug, Clone)]
struct SquaredErrors {
    sums: Vec<f64>,
    count: usize,
}

impl SquaredErrors {
    fn new(dim: usize) -> Self {
        SquaredErrors {
            sums: vec![0.0; dim],
            count: 0,
        }
    }

    fn push(&mut self, estimate: &DVector<f64>, centre: &DVector<f64>) {
        for (s, (e, c)) in self.sums.iter_mut().zip(estimate.iter().zip(centre.iter())) {
            *s += (e - c) * (e - c);
        }
        self.count += 1;
    }

    fn finish(&self) -> Option<Rmse> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(Rmse {
            aggregate: (self.sums.iter().sum::<f64>() / n).sqrt(),
            per_coefficient: self.sums.iter().map(|s| (s / n).sqrt()).collect(),
        })
    }
}

/// Per-coefficient and Euclidean RMSE of `estimates` around `beta0`.
pub fn rmse(estimates: &[DVector<f64>], beta0: &DVector<f64>) -> Result<Rmse> {
    let mut acc = SquaredErrors::new(beta0.len());
    for e in estimates {
        if e.len() != beta0.len() {
            return Err(Error::Usage("estimate and centre differ in length".into()));
        }
        acc.push(e, beta0);
    }
    acc.finish()
        .ok_or_else(|| Error::Usage("RMSE of an empty list of estimates".into()))
}

struct ReplicateOutcome {
    redraws: usize,
    /// One entry per λ; `None` if the fit failed or did not converge.
    estimates: Vec<Option<DVector<f64>>>,
}

fn run_replicate(
    config: &ExperimentConfig,
    sample: &ClusterSampleConfig,
    phis: &[PhiSpec],
    replicate: usize,
) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(config.seed, replicate as u64);
    let survey = simulate_survey_with(sample, &config.design, &mut rng)?;
    let start = fit_pmle_irls(&survey.dataset, &FitOptions::default())?;
    let estimates = phis
        .iter()
        .map(|phi| {
            if !start.converged {
                return None;
            }
            let fit = fit_pmphi(&survey.dataset, phi, &FitOptions::with_init(start.beta.clone()));
            match fit {
                Ok(f) if f.converged => Some(f.beta),
                _ => None,
            }
        })
        .collect();
    Ok(ReplicateOutcome {
        redraws: survey.redraws,
        estimates,
    })
}

#[cfg(feature = "parallel")]
fn run_replicates(
    config: &ExperimentConfig,
    sample: &ClusterSampleConfig,
    phis: &[PhiSpec],
) -> Result<Vec<ReplicateOutcome>> {
    use rayon::prelude::*;
    (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, sample, phis, r))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_replicates(
    config: &ExperimentConfig,
    sample: &ClusterSampleConfig,
    phis: &[PhiSpec],
) -> Result<Vec<ReplicateOutcome>> {
    (0..config.replicates)
        .map(|r| run_replicate(config, sample, phis, r))
        .collect()
}

/// Runs every `(distribution, ρ, λ)` cell of the grid.
///
/// Rows come out ordered by distribution, then `ρ`, then `λ`, following the
/// order of the config's lists.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentResultRow>> {
    config.validate()?;
    let centre = config.centre()?;
    let phis: Vec<PhiSpec> = config.lambda_grid.iter().map(|&l| PhiSpec::cressie_read(l)).collect();
    let mut rows = Vec::new();
    for &dist in &config.distributions {
        for &rho in &config.rho_grid {
            let sample = config.sample_config(dist, rho);
            let outcomes = run_replicates(config, &sample, &phis)?;
            let redraws = outcomes.iter().map(|o| o.redraws).sum();
            for (k, &lambda) in config.lambda_grid.iter().enumerate() {
                let mut acc = SquaredErrors::new(centre.len());
                let mut nonconverged = 0;
                for o in &outcomes {
                    match &o.estimates[k] {
                        Some(beta) => acc.push(beta, &centre),
                        None => nonconverged += 1,
                    }
                }
                let (rmse, per) = match acc.finish() {
                    Some(r) => (r.aggregate, r.per_coefficient),
                    None => (f64::NAN, vec![f64::NAN; centre.len()]),
                };
                rows.push(ExperimentResultRow {
                    dist,
                    rho,
                    lambda,
                    replicates_used: acc.count,
                    redraws,
                    nonconverged,
                    rmse,
                    rmse_per_coefficient: per,
                });
            }
        }
    }
    Ok(rows)
}

/// Rows whose excluded share exceeds [`MAX_EXCLUDED_SHARE`], as messages.
pub fn health_check(rows: &[ExperimentResultRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.excluded_share() > MAX_EXCLUDED_SHARE)
        .map(|r| {
            format!(
                "{} rho={} lambda={}: {} of {} fits did not converge",
                r.dist,
                r.rho,
                r.lambda,
                r.nonconverged,
                r.nonconverged + r.replicates_used
            )
        })
        .collect()
}
