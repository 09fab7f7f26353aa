use nalgebra::DMatrix;

use phidiv::estimation::estimate_v_from_clusters;
use phidiv::overdispersed::{draw_clusters, replicate_rng, ClusterDistribution, ClusterSampleConfig};

/// Moments of 10⁵ draws compared against the inflated-multinomial values,
/// with the variance tolerance set from the empirical fourth moment.
#[test]
fn variance_inflation_within_sampling_noise() {
    const DRAWS: usize = 100_000;
    let m = 26u64;
    let p = phidiv::data::cell_probabilities();
    for dist in ClusterDistribution::ALL {
        for rho in [0.0, 0.3, 0.6] {
            let mut rng = replicate_rng(11, 0);
            let c = p.len();
            let mut s = vec![[0.0f64; 4]; c];
            for _ in 0..DRAWS {
                let draw = dist.draw(m, rho, &p, &mut rng).unwrap();
                assert_eq!(draw.iter().sum::<u64>(), m);
                for (i, &v) in draw.iter().enumerate() {
                    let v = v as f64;
                    s[i][0] += v;
                    s[i][1] += v * v;
                    s[i][2] += v * v * v;
                    s[i][3] += v * v * v * v;
                }
            }
            let n = DRAWS as f64;
            for i in 0..c {
                let [a, b, cc, d] = s[i].map(|t| t / n);
                let var = b - a * a;
                let m4 = d - 4.0 * a * cc + 6.0 * a * a * b - 3.0 * a.powi(4);
                let target = m as f64 * p[i] * (1.0 - p[i]) * (1.0 + (m as f64 - 1.0) * rho);
                let z = (var - target) / ((m4 - var * var) / n).sqrt();
                assert!(z.abs() < 4.5, "{dist} rho={rho} cell {i}: z={z}");
                let zm = (a - m as f64 * p[i]) / (var / n).sqrt();
                assert!(zm.abs() < 4.5, "{dist} rho={rho} cell {i}: mean z={zm}");
            }
        }
    }
}

#[test]
fn cluster_covariance_is_unbiased_under_independence() {
    // Two well-populated domains, independent multinomial sampling.
    let p = vec![0.2, 0.3, 0.25, 0.25];
    let config = ClusterSampleConfig {
        sizes: vec![20; 200],
        rho: 0.0,
        p: p.clone(),
        dist: ClusterDistribution::DirichletMultinomial,
        seed: 3,
    };
    let reps = 400;
    let mut mean = DMatrix::zeros(2, 2);
    for r in 0..reps {
        let table = draw_clusters(&config, &mut replicate_rng(config.seed, r)).unwrap();
        mean += estimate_v_from_clusters(&table).unwrap();
    }
    mean /= reps as f64;
    let w = [0.5, 0.5];
    let pi = [0.4, 0.5];
    for i in 0..2 {
        let target = pi[i] * (1.0 - pi[i]) / w[i];
        assert!((mean[(i, i)] - target).abs() < 0.05 * target, "V[{i}{i}] {} vs {target}", mean[(i, i)]);
    }
    assert!(mean[(0, 1)].abs() < 0.05 * mean[(0, 0)]);
}

#[test]
fn clustering_inflates_the_estimated_covariance() {
    let p = phidiv::data::cell_probabilities();
    let trace = |rho: f64| {
        let config = ClusterSampleConfig {
            rho,
            ..ClusterSampleConfig::family_expenditure(ClusterDistribution::MInflated, 0.0, 9)
        };
        let mut total = 0.0;
        for r in 0..50 {
            let mut rng = replicate_rng(9, r);
            if let Ok(table) = draw_clusters(&config, &mut rng) {
                if let Ok(v) = estimate_v_from_clusters(&table) {
                    total += v.trace();
                }
            }
        }
        total
    };
    assert_eq!(p.len(), 24);
    assert!(trace(0.5) > 3.0 * trace(0.0));
}
