use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use phidiv::estimation::{asymptotic_covariance, estimate_v_from_clusters};
use phidiv::experiment::{health_check, run_experiment};
use phidiv::glm::DomainCounts;
use phidiv::io::{self, ReportRow};
use phidiv::overdispersed::{simulate_survey, ClusterDistribution, ClusterSampleConfig};
use phidiv::{data, fit_pmle_irls, fit_pmphi, Error, FitOptions, PhiSpec};

/// Exit status for bad arguments or unreadable/malformed input.
const EXIT_USAGE: u8 = 1;
/// Exit status for non-convergence or a failed health check.
const EXIT_NUMERIC: u8 = 2;

#[derive(Parser)]
#[command(name = "phidiv", version, about = "Minimum phi-divergence logistic regression for survey data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the logistic model to a survey CSV.
    Fit {
        /// Survey CSV (domain, design columns, weight, p_hat or n1,n).
        input: PathBuf,
        /// Comma-separated Cressie-Read parameters; fractions like 2/3 are accepted.
        #[arg(long, default_value = "0,2/3,1,2")]
        lambda: String,
        #[arg(long, value_enum, default_value_t = FitMethod::Pmphi)]
        method: FitMethod,
        /// Cluster CSV; adds sandwich covariances and standard errors.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Decimal places in the report.
        #[arg(long, default_value_t = 4)]
        digits: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one clustered Family Expenditure sample.
    Simulate {
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        /// dirichlet-multinomial, random-clumped, m-inflated, or all.
        #[arg(long, default_value = "dirichlet-multinomial")]
        dist: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Survey CSV output; with --dist all, one file per distribution with the name as suffix.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-cluster counts, usable with `fit --clusters`.
        #[arg(long)]
        clusters_out: Option<PathBuf>,
    },
    /// Run the Monte-Carlo RMSE study.
    Experiment {
        /// key = value config; the bundled full-scale one is used if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Results CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot RMSE against rho from a results CSV, one SVG per distribution.
    Plot {
        input: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    /// Damped Newton on the phi-divergence objective.
    Pmphi,
    /// Weighted IRLS for the pseudo maximum likelihood estimator.
    Irls,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular(_) | Error::Infeasible(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_context(path: &Path, e: Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn fit(
    input: &Path,
    lambda: &str,
    method: FitMethod,
    clusters: Option<&Path>,
    digits: usize,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let survey = io::parse_survey_csv(&read(input)?).map_err(|e| with_context(input, e))?;
    let ds = &survey.dataset;
    let mut fits = Vec::new();
    match method {
        FitMethod::Irls => fits.push(("irls".to_string(), fit_pmle_irls(ds, &FitOptions::default())?)),
        FitMethod::Pmphi => {
            let lambdas = io::parse_number_list(lambda)
                .ok_or_else(|| Failure::Usage(format!("bad --lambda list '{lambda}'")))?;
            for (text, l) in lambda.split(',').zip(lambdas) {
                if !l.is_finite() {
                    return Err(Failure::Usage(format!("lambda must be finite; got {l}")));
                }
                let phi = PhiSpec::cressie_read(l);
                fits.push((text.trim().to_string(), fit_pmphi(ds, &phi, &FitOptions::default())?));
            }
        }
    }

    let rows: Vec<ReportRow> = fits
        .iter()
        .map(|(label, f)| ReportRow {
            label: label.clone(),
            beta: f.beta.clone(),
            converged: f.converged,
        })
        .collect();
    let mut report = io::format_coefficient_table(&survey.coefficient_names, &rows, digits);

    if let Some(path) = clusters {
        let table = io::parse_cluster_csv(&read(path)?).map_err(|e| with_context(path, e))?;
        if table.domains() != ds.domains() {
            return Err(Failure::Usage(format!(
                "{}: {} domains, input has {}",
                path.display(),
                table.domains(),
                ds.domains()
            )));
        }
        let v = estimate_v_from_clusters(&table)?;
        let n = table.total() as f64;
        for (label, f) in &fits {
            let cov = asymptotic_covariance(ds.design(), ds.weights(), &v, &f.beta)?;
            let se = DVector::from_iterator(f.beta.len(), cov.v_beta.diagonal().iter().map(|d| (d / n).sqrt()));
            report.push_str(&format!("\n# lambda={label}: standard errors (n={})\n", table.total()));
            report.push_str(&io::format_coefficient_table(
                &survey.coefficient_names,
                &[ReportRow {
                    label: label.clone(),
                    beta: se,
                    converged: true,
                }],
                digits,
            ));
            report.push_str(&format!("# lambda={label}: asymptotic covariance of sqrt(n)(beta_hat - beta)\n"));
            report.push_str(&io::format_matrix(&survey.coefficient_names, &cov.v_beta, digits));
        }
    }
    emit(out, &report)?;

    let failed: Vec<String> = fits
        .iter()
        .filter(|(_, f)| !f.converged)
        .map(|(label, f)| {
            format!(
                "lambda={label}: no convergence after {} iterations{}",
                f.iterations,
                f.diagnostic.as_deref().map(|d| format!(" ({d})")).unwrap_or_default()
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(failed.join("\n")))
    }
}

fn simulate(
    rho: f64,
    dist: &str,
    seed: u64,
    out: Option<&Path>,
    clusters_out: Option<&Path>,
) -> Result<(), Failure> {
    let dists: Vec<ClusterDistribution> = if dist == "all" {
        ClusterDistribution::ALL.to_vec()
    } else {
        vec![dist.parse()?]
    };
    let labels_a: Vec<String> = (0..12).map(|i| format!("age{}", data::age_level(i) + 1)).collect();
    let labels_b: Vec<String> = (0..12).map(|i| format!("size{}", data::size_level(i) + 1)).collect();
    let several = dists.len() > 1;
    let mut combined = String::new();
    for d in dists {
        let config = ClusterSampleConfig::family_expenditure(d, rho, seed);
        let sample = simulate_survey(&config, &data::design())?;
        let counts: Vec<DomainCounts> = sample.table.domain_counts();
        let comment = format!("dist={d} rho={rho} seed={seed} redraws={}", sample.redraws);
        let csv = io::write_survey_csv(&labels_a, &labels_b, &counts, Some(&comment));
        let cluster_csv = io::write_cluster_csv(&sample.table);
        match out {
            Some(p) if several => write(&suffixed(p, d.name()), &csv)?,
            Some(p) => write(p, &csv)?,
            None => combined.push_str(&csv),
        }
        if let Some(p) = clusters_out {
            let target = if several { suffixed(p, d.name()) } else { p.to_path_buf() };
            write(&target, &cluster_csv)?;
        }
    }
    if out.is_none() {
        print!("{combined}");
    }
    Ok(())
}

/// `dir/name.csv` becomes `dir/name_<suffix>.csv`.
fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn experiment(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let text = match config {
        Some(p) => read(p)?,
        None => data::FULL_EXPERIMENT_CFG.to_string(),
    };
    let mut cfg = io::parse_experiment_config(&text).map_err(|e| match config {
        Some(p) => with_context(p, e),
        None => e.into(),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = run_experiment(&cfg)?;
    emit(out, &io::write_results_csv(&rows))?;
    let problems = health_check(&rows);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("health check failed:\n{}", problems.join("\n"))))
    }
}

fn plot(input: &Path, out: &Path) -> Result<(), Failure> {
    let points = io::parse_results_csv(&read(input)?).map_err(|e| with_context(input, e))?;
    if points.is_empty() {
        return Err(Failure::Usage(format!("{}: no result rows", input.display())));
    }
    fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    for (dist, svg) in io::render_rmse_plots(&points) {
        let path = out.join(format!("rmse_{dist}.svg"));
        write(&path, &svg)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Fit {
            input,
            lambda,
            method,
            clusters,
            digits,
            out,
        } => fit(input, lambda, *method, clusters.as_deref(), *digits, out.as_deref()),
        Command::Simulate {
            rho,
            dist,
            seed,
            out,
            clusters_out,
        } => simulate(*rho, dist, *seed, out.as_deref(), clusters_out.as_deref()),
        Command::Experiment { config, seed, out } => experiment(config.as_deref(), *seed, out.as_deref()),
        Command::Plot { input, out } => plot(input, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
