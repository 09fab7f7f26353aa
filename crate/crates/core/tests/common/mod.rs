#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use phidiv::glm::pi_vector;
use phidiv::SurveyDataset;
use rand::Rng;
use rand_distr::StandardNormal;

/// Intercept plus `k` standard normal columns, redrawn until full rank.
pub fn random_design<R: Rng>(rng: &mut R, domains: usize, k: usize) -> DMatrix<f64> {
    loop {
        let x = DMatrix::from_fn(domains, k + 1, |_, c| {
            if c == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        if phidiv::glm::validate_design(&x).is_ok() {
            return x;
        }
    }
}

pub fn random_weights<R: Rng>(rng: &mut R, domains: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..domains).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_beta<R: Rng>(rng: &mut R, params: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(params, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// A dataset whose proportions are a noisy logistic model, kept inside
/// `[0.03, 0.97]` so no fit runs off to infinity.
pub fn random_dataset<R: Rng>(rng: &mut R, domains: usize, k: usize) -> SurveyDataset {
    let x = random_design(rng, domains, k);
    let beta = random_beta(rng, k + 1, 0.5);
    let pi = pi_vector(&x, &beta).unwrap();
    let p_hat = pi
        .iter()
        .map(|p| (p + rng.random_range(-0.1..0.1)).clamp(0.03, 0.97))
        .collect();
    let w = random_weights(rng, domains);
    SurveyDataset::new(x, w, p_hat).unwrap()
}
