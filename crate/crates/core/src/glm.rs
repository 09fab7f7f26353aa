//! Logistic model and survey datasets.
//!
//! Coefficient vectors are plain `DVector<f64>` of length `k + 1`, intercept
//! first. For factor designs built with [`factor_design`] the remaining
//! entries are the non-reference levels of the first factor followed by the
//! non-reference levels of the second.

use nalgebra::{DMatrix, DVector};

use crate::divergence::ProbVector2I;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

/// Observed counts for one domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainCounts {
    pub successes: u64,
    pub total: u64,
}

/// Design matrix, domain weights and estimated success proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    x: DMatrix<f64>,
    weights: Vec<f64>,
    p_hat: Vec<f64>,
    counts: Option<Vec<DomainCounts>>,
}

impl SurveyDataset {
    /// Builds a dataset from weights that already sum to one.
    pub fn new(x: DMatrix<f64>, weights: Vec<f64>, p_hat: Vec<f64>) -> Result<Self> {
        validate_design(&x)?;
        let domains = x.nrows();
        if weights.len() != domains || p_hat.len() != domains {
            return Err(Error::Usage(format!(
                "design has {domains} rows but {} weights and {} proportions",
                weights.len(),
                p_hat.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("weights must be positive; got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!("weights must sum to 1; got {total}")));
        }
        if let Some(p) = p_hat.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("proportions must lie in [0, 1]; got {p}")));
        }
        Ok(SurveyDataset {
            x,
            weights,
            p_hat,
            counts: None,
        })
    }

    /// Builds a dataset from raw weights (any positive scale) and proportions,
    /// normalising the weights to sum to one.
    pub fn from_raw_weights(x: DMatrix<f64>, raw: &[f64], p_hat: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("weights must have a positive total".into()));
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Self::new(x, weights, p_hat)
    }

    /// Builds a dataset from per-domain counts with `w_i = n_i / n` and
    /// `p̂_i = n_i1 / n_i`.
    pub fn from_counts(x: DMatrix<f64>, counts: Vec<DomainCounts>) -> Result<Self> {
        if let Some((i, c)) = counts.iter().enumerate().find(|(_, c)| c.total == 0) {
            return Err(Error::Degenerate(format!(
                "domain {} has no observations ({} successes)",
                i + 1,
                c.successes
            )));
        }
        if let Some(c) = counts.iter().find(|c| c.successes > c.total) {
            return Err(Error::Domain(format!(
                "successes {} exceed total {}",
                c.successes, c.total
            )));
        }
        let raw: Vec<f64> = counts.iter().map(|c| c.total as f64).collect();
        let p_hat = counts
            .iter()
            .map(|c| c.successes as f64 / c.total as f64)
            .collect();
        let mut ds = Self::from_raw_weights(x, &raw, p_hat)?;
        ds.counts = Some(counts);
        Ok(ds)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn p_hat(&self) -> &[f64] {
        &self.p_hat
    }

    pub fn counts(&self) -> Option<&[DomainCounts]> {
        self.counts.as_deref()
    }

    /// Number of domains `I`.
    pub fn domains(&self) -> usize {
        self.x.nrows()
    }

    /// Number of coefficients `k + 1`.
    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    /// The same data with domains reordered: row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.domains()];
        if order.len() != self.domains() {
            return Err(Error::Usage("permutation has the wrong length".into()));
        }
        for &i in order {
            if i >= seen.len() || seen[i] {
                return Err(Error::Usage("not a permutation".into()));
            }
            seen[i] = true;
        }
        let x = DMatrix::from_fn(self.domains(), self.n_params(), |r, c| self.x[(order[r], c)]);
        Ok(SurveyDataset {
            x,
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            p_hat: order.iter().map(|&i| self.p_hat[i]).collect(),
            counts: self
                .counts
                .as_ref()
                .map(|c| order.iter().map(|&i| c[i]).collect()),
        })
    }

    pub fn data_vector(&self) -> ProbVector2I {
        build_data_vector(&self.weights, &self.p_hat).expect("validated dataset")
    }
}

/// Per-cluster counts: one row per cluster, `2I` cells per row in the
/// paired `(success_1, failure_1, …)` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTable {
    rows: Vec<Vec<u64>>,
}

impl ClusterTable {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || width % 2 != 0 {
            return Err(Error::Usage(format!(
                "cluster rows need a positive even number of cells; got {width}"
            )));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Usage("cluster rows differ in length".into()));
        }
        Ok(ClusterTable { rows })
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn clusters(&self) -> usize {
        self.rows.len()
    }

    pub fn domains(&self) -> usize {
        self.rows[0].len() / 2
    }

    /// Cell totals summed over clusters.
    pub fn cell_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.rows[0].len()];
        for row in &self.rows {
            for (t, c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        totals
    }

    /// `(n_i1, n_i)` per domain.
    pub fn domain_counts(&self) -> Vec<DomainCounts> {
        self.cell_totals()
            .chunks(2)
            .map(|c| DomainCounts {
                successes: c[0],
                total: c[0] + c[1],
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    /// Aggregated dataset with `w_i = n_i / n`, `p̂_i = n_i1 / n_i`.
    pub fn to_dataset(&self, x: DMatrix<f64>) -> Result<SurveyDataset> {
        SurveyDataset::from_counts(x, self.domain_counts())
    }
}

/// Checks the intercept column and full column rank.
pub fn validate_design(x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::Usage("design matrix is empty".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("design matrix has non-finite entries".into()));
    }
    if x.column(0).iter().any(|&v| v != 1.0) {
        return Err(Error::Usage("first design column must be all ones".into()));
    }
    if x.ncols() > x.nrows() {
        return Err(Error::Usage(format!(
            "{} parameters cannot be identified from {} domains",
            x.ncols(),
            x.nrows()
        )));
    }
    let rank = x.clone().svd(false, false).rank(RANK_TOL * x.nrows() as f64);
    if rank < x.ncols() {
        return Err(Error::Usage(format!(
            "design matrix is rank deficient (rank {rank} < {})",
            x.ncols()
        )));
    }
    Ok(())
}

/// `exp(η) / (1 + exp(η))`, evaluated without overflow.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn check_dims(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<()> {
    if x.ncols() != beta.len() {
        return Err(Error::Usage(format!(
            "design has {} columns but beta has {} entries",
            x.ncols(),
            beta.len()
        )));
    }
    Ok(())
}

/// `(π(x_1ᵀβ), …, π(x_Iᵀβ))`.
pub fn pi_vector(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(x, beta)?;
    Ok((x * beta).map(logistic))
}

/// Success and failure probabilities `(π_i, 1 - π_i)` per domain, each
/// computed directly from the linear predictor so neither loses precision.
pub(crate) fn pi_pairs(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    check_dims(x, beta)?;
    Ok((x * beta)
        .iter()
        .map(|&eta| (logistic(eta), logistic(-eta)))
        .collect())
}

fn paired(w: &[f64], p: &[f64], what: &str) -> Result<ProbVector2I> {
    if w.len() != p.len() {
        return Err(Error::Usage(format!(
            "{} weights but {} {what}",
            w.len(),
            p.len()
        )));
    }
    let values = w
        .iter()
        .zip(p)
        .flat_map(|(&wi, &pi)| [wi * pi, wi * (1.0 - pi)])
        .collect();
    ProbVector2I::new(values)
}

/// `p_w(β) = (w_1 π_1, w_1 (1 - π_1), …)`.
pub fn build_model_vector(w: &[f64], pi: &[f64]) -> Result<ProbVector2I> {
    if let Some(p) = pi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Domain(format!("model probabilities must lie in (0, 1); got {p}")));
    }
    paired(w, pi, "model probabilities")
}

/// `p̂_w = (w_1 p̂_1, w_1 (1 - p̂_1), …)`; boundary proportions are allowed.
pub fn build_data_vector(w: &[f64], p_hat: &[f64]) -> Result<ProbVector2I> {
    if let Some(p) = p_hat.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("proportions must lie in [0, 1]; got {p}")));
    }
    paired(w, p_hat, "proportions")
}

/// Intercept plus reference-coded dummies for two categorical factors.
///
/// `a[i]` and `b[i]` are zero-based level indices of domain `i`; level 0 of
/// each factor is the reference.
pub fn factor_design(a: &[usize], a_levels: usize, b: &[usize], b_levels: usize) -> Result<DMatrix<f64>> {
    if a.len() != b.len() {
        return Err(Error::Usage("factor columns differ in length".into()));
    }
    if a.iter().any(|&l| l >= a_levels) || b.iter().any(|&l| l >= b_levels) {
        return Err(Error::Usage("factor level out of range".into()));
    }
    let cols = 1 + (a_levels - 1) + (b_levels - 1);
    let mut x = DMatrix::zeros(a.len(), cols);
    for (i, (&la, &lb)) in a.iter().zip(b).enumerate() {
        x[(i, 0)] = 1.0;
        if la > 0 {
            x[(i, la)] = 1.0;
        }
        if lb > 0 {
            x[(i, a_levels - 1 + lb)] = 1.0;
        }
    }
    Ok(x)
}
