//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phidiv::data::{self, REFERENCE_ESTIMATES};
use phidiv::divergence::{cressie_read_deriv, cressie_read_eval};
use phidiv::estimation::{asymptotic_covariance, binomial_input_covariance, objective, objective_gradient};
use phidiv::experiment::{run_experiment, ExperimentConfig};
use phidiv::glm::pi_vector;
use phidiv::overdispersed::{replicate_rng, ClusterDistribution};
use phidiv::{fit_pmle_irls, fit_pmphi, phi_divergence, FitOptions, PhiSpec, ProbVector2I};

const SEED: u64 = 20190101;
const LAMBDAS: [f64; 4] = [0.0, 2.0 / 3.0, 1.0, 2.0];

type Outcome = Result<String, String>;

fn within_time(detail: String, elapsed: Duration, limit: Duration) -> Outcome {
    if elapsed < limit {
        Ok(format!("{detail}; {:.2?} (limit {limit:?})", elapsed))
    } else {
        Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn reference_coefficients() -> Outcome {
    let start = Instant::now();
    let ds = data::family_expenditure();
    let mut worst: f64 = 0.0;
    for (lambda, reference) in REFERENCE_ESTIMATES {
        let fit = fit_pmphi(&ds, &PhiSpec::cressie_read(lambda), &FitOptions::default()).map_err(|e| e.to_string())?;
        if !fit.converged {
            return Err(format!("λ={lambda} did not converge"));
        }
        for (b, p) in fit.beta.iter().zip(reference) {
            worst = worst.max((b - p).abs());
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("24 coefficients, max |Δ| = {worst:.2e}");
    if worst > 0.01 {
        return Err(detail);
    }
    within_time(detail, elapsed, Duration::from_secs(1))
}

fn estimator_paths() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let domains = rng.random_range(6..=20);
        let k = rng.random_range(1..=5).min(domains - 1);
        let ds = common::random_dataset(&mut rng, domains, k);
        let zero = FitOptions::with_init(DVector::zeros(k + 1));
        let newton = fit_pmphi(&ds, &PhiSpec::kullback_leibler(), &zero).map_err(|e| e.to_string())?;
        let irls = fit_pmle_irls(&ds, &FitOptions::default()).map_err(|e| e.to_string())?;
        if !newton.converged || !irls.converged {
            return Err(format!("case {case}: a solver did not converge"));
        }
        worst = worst.max((&newton.beta - &irls.beta).amax());
    }
    let detail = format!("100 datasets, max |Δβ| = {worst:.2e} (tol 1e-6)");
    if worst >= 1e-6 {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), Duration::from_secs(10))
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let domains = rng.random_range(6..=20);
        let k = rng.random_range(1..=5).min(domains - 1);
        let ds = common::random_dataset(&mut rng, domains, k);
        let lambda = LAMBDAS[case % 4];
        let phi = PhiSpec::cressie_read(lambda);
        let beta = common::random_beta(&mut rng, k + 1, 0.5);
        let g = objective_gradient(&ds, &phi, &beta).map_err(|e| e.to_string())?;
        let fd = DVector::from_fn(k + 1, |j, _| {
            let h = 1e-5 * beta[j].abs().max(1.0);
            let mut up = beta.clone();
            up[j] += h;
            let mut down = beta.clone();
            down[j] -= h;
            (objective(&ds, &phi, &up).unwrap() - objective(&ds, &phi, &down).unwrap()) / (2.0 * h)
        });
        let rel = (&g - &fd).norm() / g.norm().max(1e-300);
        worst = worst.max(rel);
    }
    let detail = format!("100 triples, max relative error = {worst:.2e} (tol 1e-5)");
    if worst < 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_paired<R: Rng>(rng: &mut R, domains: usize) -> ProbVector2I {
    let raw: Vec<f64> = (0..2 * domains).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ProbVector2I::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

fn divergence_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let lambdas = [-1.5, -1.0, -0.5, 0.0, 2.0 / 3.0, 1.0, 2.0, 3.5];
    let mut checks = 0usize;
    for _ in 0..200 {
        let domains = rng.random_range(1..=12);
        let p = random_paired(&mut rng, domains);
        let q = random_paired(&mut rng, domains);
        for &lambda in &lambdas {
            let phi = PhiSpec::cressie_read(lambda);
            let d = phi_divergence(&p, &q, &phi).map_err(|e| e.to_string())?;
            if !(d > 0.0) {
                return Err(format!("d(p,q) = {d} for distinct vectors, λ={lambda}"));
            }
            let same = phi_divergence(&p, &p, &phi).map_err(|e| e.to_string())?;
            if same.abs() > 1e-14 {
                return Err(format!("d(p,p) = {same}, λ={lambda}"));
            }
            let c = rng.random_range(-3.0..3.0);
            let psi = PhiSpec::custom(
                move |x| cressie_read_eval(lambda, x).unwrap() + c * (x - 1.0),
                move |x| cressie_read_deriv(lambda, x, 1).unwrap() + c,
                move |x| cressie_read_deriv(lambda, x, 2).unwrap(),
            );
            let dpsi = phi_divergence(&p, &q, &psi).map_err(|e| e.to_string())?;
            if (dpsi - d).abs() > 1e-12 * d.abs().max(1.0) {
                return Err(format!("ψ-equivalence: {dpsi} vs {d}, λ={lambda}, c={c}"));
            }
            checks += 3;
        }
        let kl = phi_divergence(&p, &q, &PhiSpec::cressie_read(0.0)).unwrap();
        let direct: f64 = p.values().iter().zip(q.values()).map(|(a, b)| a * (a / b).ln()).sum();
        if (kl - direct).abs() > 1e-12 {
            return Err(format!("KL specialisation: {kl} vs {direct}"));
        }
        checks += 1;
    }
    for lambda in [-2.0, -1.0, -0.5, 0.0, 1e-9, 2.0 / 3.0, 1.0, 2.0, 5.0] {
        let v = cressie_read_eval(lambda, 1.0).unwrap();
        let d1 = cressie_read_deriv(lambda, 1.0, 1).unwrap();
        let d2 = cressie_read_deriv(lambda, 1.0, 2).unwrap();
        if v.abs() > 1e-15 || d1.abs() > 1e-15 || (d2 - 1.0).abs() > 1e-15 {
            return Err(format!("normalisation at λ={lambda}: {v}, {d1}, {d2}"));
        }
        checks += 3;
    }
    Ok(format!("{checks} checks: nonnegativity, zero iff equal, ψ-equivalence, KL, normalisation"))
}

fn sampler_moments() -> Outcome {
    const DRAWS: usize = 100_000;
    const M: u64 = 26;
    let start = Instant::now();
    let p = data::cell_probabilities();
    let cells = p.len();
    let mut worst_z: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let mut failures = Vec::new();
    for dist in ClusterDistribution::ALL {
        for rho in [0.0, 0.3, 0.6] {
            let mut rng = replicate_rng(SEED, 5);
            let mut sum = vec![0.0f64; cells];
            let mut sum_sq = vec![0.0f64; cells];
            for _ in 0..DRAWS {
                let draw = dist.draw(M, rho, &p, &mut rng).map_err(|e| e.to_string())?;
                if draw.iter().sum::<u64>() != M {
                    return Err(format!("{dist} ρ={rho}: draw does not sum to {M}"));
                }
                for (c, &v) in draw.iter().enumerate() {
                    sum[c] += v as f64;
                    sum_sq[c] += (v * v) as f64;
                }
            }
            let n = DRAWS as f64;
            for c in 0..cells {
                let mean = sum[c] / n;
                let var = (sum_sq[c] - n * mean * mean) / (n - 1.0);
                let target_mean = M as f64 * p[c];
                let target_var = target_mean * (1.0 - p[c]) * (1.0 + (M as f64 - 1.0) * rho);
                let z = (mean - target_mean).abs() / (var / n).sqrt();
                let rel = (var - target_var).abs() / target_var;
                worst_z = worst_z.max(z);
                worst_var = worst_var.max(rel);
                if z > 3.0 {
                    failures.push(format!("{dist} ρ={rho} cell {c}: mean off by {z:.2} SE"));
                }
                if rel > 0.05 {
                    failures.push(format!("{dist} ρ={rho} cell {c}: variance off by {:.1}%", 100.0 * rel));
                }
            }
        }
    }
    let detail = format!(
        "9 settings x 24 cells, worst mean z = {worst_z:.2}, worst variance error = {:.2}%",
        100.0 * worst_var
    );
    if !failures.is_empty() {
        return Err(format!("{detail}; {}", failures.join("; ")));
    }
    within_time(detail, start.elapsed(), Duration::from_secs(30))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn covariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let domains = rng.random_range(6..=20);
        let k = rng.random_range(1..=5).min(domains - 1);
        let x = common::random_design(&mut rng, domains, k);
        let w = common::random_weights(&mut rng, domains);
        let beta = common::random_beta(&mut rng, k + 1, 0.7);
        let pi = pi_vector(&x, &beta).unwrap();
        let v = binomial_input_covariance(pi.as_slice(), &w);
        let est = asymptotic_covariance(&x, &w, &v, &beta).map_err(|e| e.to_string())?;
        let inv = x
            .tr_mul(&(&est.delta * &x))
            .try_inverse()
            .ok_or_else(|| format!("case {case}: XᵀΔX singular"))?;
        let scale = inv.amax().max(1.0);
        worst = worst.max((&est.v_beta - &inv).amax() / scale);
        check_spd(&est.v_beta, case)?;

        let a = DMatrix::from_fn(domains, domains, |_, _| rng.random_range(-1.0..1.0));
        let general = &a * a.transpose();
        let est = asymptotic_covariance(&x, &w, &general, &beta).map_err(|e| e.to_string())?;
        check_spd(&est.v_beta, case)?;
    }
    let detail = format!("50 models, max scaled |Δ| = {worst:.2e} (tol 1e-10), all outputs symmetric PSD");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn check_spd(m: &DMatrix<f64>, case: usize) -> Result<(), String> {
    if m != &m.transpose() {
        return Err(format!("case {case}: output not symmetric"));
    }
    let lo = min_eigenvalue(m);
    if lo < -1e-10 * m.amax().max(1.0) {
        return Err(format!("case {case}: eigenvalue {lo:.3e}"));
    }
    Ok(())
}

fn desk_study() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::desk(SEED);
    let rows = run_experiment(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let find = |dist: ClusterDistribution, rho: f64, lambda: f64| {
        rows.iter()
            .find(|r| r.dist == dist && r.rho == rho && r.lambda == lambda)
            .expect("grid row")
    };
    let mut problems = Vec::new();
    for dist in ClusterDistribution::ALL {
        for lambda in LAMBDAS {
            let low = find(dist, 0.0, lambda).rmse;
            let high = find(dist, 0.9, lambda).rmse;
            if !(high > low) {
                problems.push(format!("(a) {dist} λ={lambda}: {high} ≤ {low}"));
            }
        }
        let base = find(dist, 0.9, 0.0).rmse;
        for lambda in &LAMBDAS[1..] {
            let r = find(dist, 0.9, *lambda).rmse;
            if r > base {
                problems.push(format!("(b) {dist} λ={lambda}: {r} > {base}"));
            }
        }
        for lambda in LAMBDAS {
            let reference = find(ClusterDistribution::DirichletMultinomial, 0.0, lambda);
            let row = find(dist, 0.0, lambda);
            if row.rmse != reference.rmse || row.rmse_per_coefficient != reference.rmse_per_coefficient {
                problems.push(format!("(c) {dist} λ={lambda} differs at ρ=0"));
            }
        }
    }
    let detail = format!("{} rows, properties (a) (b) (c)", rows.len());
    if !problems.is_empty() {
        return Err(format!("{detail}; {}", problems.join("; ")));
    }
    within_time(detail, elapsed, Duration::from_secs(300))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "distributions = dirichlet-multinomial, random-clumped, m-inflated\n\
         rho_grid = 0, 0.3, 0.6, 0.9\n\
         lambda_grid = 0, 2/3, 1, 2\n\
         replicates = 100\n\
         clusters = 50\n\
         total = 1299\n\
         seed = 7\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("results{run}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_phidiv"))
            .arg("experiment")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {run} exited with {status}"));
        }
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let detail = format!("two runs, {} bytes each", outputs[0].len());
    if outputs[0] == outputs[1] {
        Ok(detail)
    } else {
        Err(format!("{detail}; outputs differ"))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 Family Expenditure coefficients within 0.01", reference_coefficients),
        ("2 Newton (λ=0) and IRLS agree within 1e-6", estimator_paths),
        ("3 gradient matches central differences", gradient),
        ("4 divergence property suite", divergence_properties),
        ("5 sampler moments", sampler_moments),
        ("6 binomial covariance reduction", covariance),
        ("7 desk-scale RMSE study properties", desk_study),
        ("8 experiment CLI byte-identical on rerun", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 8 - failed, 8);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

