//! Bundled Family Expenditure Survey example.
//!
//! Twelve domains cross age of head of household (4 levels) with household
//! size (3 levels), in row-major order: domain `i` (zero-based) has age level
//! `i / 3` and size level `i % 3`. The counts give both the example's
//! weights `N_i / N` with proportions `N_i1 / N_i` and the theoretical cell
//! probabilities used by the simulation study.

use nalgebra::DMatrix;

use crate::glm::{factor_design, DomainCounts, SurveyDataset};

pub const AGE_LEVELS: usize = 4;
pub const SIZE_LEVELS: usize = 3;

/// Households per domain; sums to 1299.
pub const DOMAIN_TOTALS: [u64; 12] = [10, 63, 110, 14, 35, 281, 40, 110, 185, 204, 196, 51];

/// Owner-occupier households per domain.
pub const DOMAIN_SUCCESSES: [u64; 12] = [2, 38, 65, 6, 29, 188, 17, 56, 105, 78, 93, 21];

pub const TOTAL_HOUSEHOLDS: u64 = 1299;

/// Coefficient names in design-column order.
pub const COEFFICIENT_NAMES: [&str; 6] = ["b0", "b1(2)", "b1(3)", "b1(4)", "b2(2)", "b2(3)"];

/// Reference coefficients (4 decimals) for λ ∈ {0, 2/3, 1, 2}.
pub const REFERENCE_ESTIMATES: [(f64, [f64; 6]); 4] = [
    (0.0, [-0.1585, 0.4403, -0.1412, -0.4179, 0.5042, 0.4703]),
    (2.0 / 3.0, [-0.1564, 0.4291, -0.1436, -0.4174, 0.4985, 0.4735]),
    (1.0, [-0.1574, 0.4251, -0.1438, -0.4158, 0.4971, 0.4760]),
    (2.0, [-0.1663, 0.4192, -0.1408, -0.4075, 0.4974, 0.4856]),
];

/// The bundled CSV fixture, in the `fit` input schema.
pub const FAMILY_EXPENDITURE_CSV: &str = include_str!("../data/family_expenditure.csv");

/// The bundled experiment configuration with the full study grids.
pub const FULL_EXPERIMENT_CFG: &str = include_str!("../data/paper_experiment.cfg");

pub fn age_level(domain: usize) -> usize {
    domain / SIZE_LEVELS
}

pub fn size_level(domain: usize) -> usize {
    domain % SIZE_LEVELS
}

/// The 12 × 6 reference-coded design matrix.
pub fn design() -> DMatrix<f64> {
    let a: Vec<usize> = (0..12).map(age_level).collect();
    let b: Vec<usize> = (0..12).map(size_level).collect();
    factor_design(&a, AGE_LEVELS, &b, SIZE_LEVELS).expect("static layout")
}

pub fn counts() -> Vec<DomainCounts> {
    DOMAIN_TOTALS
        .iter()
        .zip(DOMAIN_SUCCESSES)
        .map(|(&total, successes)| DomainCounts { successes, total })
        .collect()
}

/// Weights `N_i / N` and proportions `N_i1 / N_i`.
pub fn family_expenditure() -> SurveyDataset {
    SurveyDataset::from_counts(design(), counts()).expect("static dataset")
}

/// Theoretical `2I`-cell probabilities `(N_i1 / N, (N_i - N_i1) / N, …)`.
pub fn cell_probabilities() -> Vec<f64> {
    let n = TOTAL_HOUSEHOLDS as f64;
    DOMAIN_TOTALS
        .iter()
        .zip(DOMAIN_SUCCESSES)
        .flat_map(|(&t, s)| [s as f64 / n, (t - s) as f64 / n])
        .collect()
}
