use std::path::Path;
use std::process::{Command, Output};

fn phidiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phidiv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Rows of the coefficient table keyed by their first field.
fn table_rows(text: &str) -> Vec<(String, Vec<f64>)> {
    text.lines()
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(|l| {
            let mut f = l.split_whitespace();
            let label = f.next().unwrap().to_string();
            (label, f.map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn fit_reproduces_reference_table() {
    let out = phidiv(&["fit", &bundled("family_expenditure.csv")]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("lambda"));
    let rows = table_rows(&text);
    assert_eq!(rows.len(), 4);
    for ((label, values), (_, reference)) in rows.iter().zip(phidiv::data::REFERENCE_ESTIMATES) {
        for (v, p) in values.iter().zip(reference) {
            assert!((v - p).abs() < 0.01, "{label}: {v} vs {p}");
        }
    }
}

#[test]
fn irls_matches_lambda_zero() {
    let input = bundled("family_expenditure.csv");
    let a = table_rows(&stdout(&phidiv(&["fit", &input, "--lambda", "0", "--digits", "8"])));
    let b = table_rows(&stdout(&phidiv(&["fit", &input, "--method", "irls", "--digits", "8"])));
    assert_eq!(b[0].0, "irls");
    for (x, y) in a[0].1.iter().zip(&b[0].1) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn simulated_sample_feeds_back_into_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sample = dir.path().join("s.csv");
    let clusters = dir.path().join("c.csv");
    let out = phidiv(&[
        "simulate",
        "--rho",
        "0.3",
        "--dist",
        "random-clumped",
        "--seed",
        "4",
        "--out",
        sample.to_str().unwrap(),
        "--clusters-out",
        clusters.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = phidiv(&[
        "fit",
        sample.to_str().unwrap(),
        "--clusters",
        clusters.to_str().unwrap(),
    ]);
    assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(stdout(&fit).contains("standard errors"));

    let again = dir.path().join("s2.csv");
    phidiv(&["simulate", "--rho", "0.3", "--dist", "random-clumped", "--seed", "4", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&sample).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_all_prints_three_tables() {
    let out = phidiv(&["simulate", "--rho", "0", "--dist", "all", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.matches("# dist=").count(), 3);
    assert_eq!(text.matches("domain,factorA,factorB,weight,n1,n").count(), 3);
    // At ρ = 0 the three samplers draw the same sample.
    let tables: Vec<&str> = text.split("# dist=").skip(1).map(|t| t.split_once('\n').unwrap().1).collect();
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[1], tables[2]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(phidiv(&["fit", "/does/not/exist.csv"]).status.code(), Some(1));
    assert_eq!(phidiv(&["fit"]).status.code(), Some(1));
    assert_eq!(phidiv(&["simulate", "--rho", "1.5"]).status.code(), Some(1));
    assert_eq!(phidiv(&["simulate", "--dist", "poisson"]).status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "domain,x1,weight,p_hat\na,0,1,0.5\nb,1,1\n").unwrap();
    let out = phidiv(&["fit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "replicates = 2\nunknown_key = 1\n").unwrap();
    let out = phidiv(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));

    // Completely separated data: the fit cannot converge.
    let sep = dir.path().join("sep.csv");
    std::fs::write(&sep, "domain,x1,weight,p_hat\na,0,1,0\nb,1,1,0\nc,2,1,1\nd,3,1,1\n").unwrap();
    let out = phidiv(&["fit", sep.to_str().unwrap(), "--lambda", "0"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let results = dir.path().join("r.csv");
    std::fs::write(&results, "dist,rho,rmse\nm-inflated,0,1\n").unwrap();
    assert_eq!(phidiv(&["plot", results.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn health_check_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Small heavily clustered samples: a few percent of fits separate.
    let cfg = dir.path().join("clustered.cfg");
    std::fs::write(
        &cfg,
        "distributions = dirichlet-multinomial\nrho_grid = 0.6\nlambda_grid = 0\nreplicates = 100\nclusters = 20\ntotal = 300\nseed = 1\n",
    )
    .unwrap();
    let out = phidiv(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("health check"));
    assert!(stdout(&out).starts_with("dist,rho,lambda"));

    // A layout that can never observe every domain is a configuration error.
    let sparse = dir.path().join("sparse.cfg");
    std::fs::write(
        &sparse,
        "distributions = m-inflated\nrho_grid = 0.9\nlambda_grid = 0\nreplicates = 30\nclusters = 2\ntotal = 60\nseed = 1\n",
    )
    .unwrap();
    assert_eq!(phidiv(&["experiment", "--config", sparse.to_str().unwrap()]).status.code(), Some(1));
}

/// Points of each polyline, keyed by its `data-lambda` attribute.
fn polylines(svg: &str) -> Vec<(f64, Vec<(f64, f64)>)> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            let attr = |name: &str| {
                let start = l.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                let end = start + l[start..].find('"').unwrap();
                l[start..end].to_string()
            };
            let lambda: f64 = attr("data-lambda").parse().unwrap();
            let points = attr("points")
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            (lambda, points)
        })
        .collect()
}

#[test]
fn experiment_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "distributions = dirichlet-multinomial, m-inflated\nrho_grid = 0, 0.4, 0.8\nlambda_grid = 0, 2/3\nreplicates = 60\nclusters = 50\ntotal = 1299\nseed = 3\n",
    )
    .unwrap();
    let results = dir.path().join("r.csv");
    let out = phidiv(&["experiment", "--config", cfg.to_str().unwrap(), "--out", results.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&results).unwrap();
    assert!(csv.starts_with("dist,rho,lambda,reps_used,redraws,nonconverged,rmse,rmse_b0,"));

    let plots = dir.path().join("plots");
    let out = phidiv(&["plot", results.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let points = phidiv::io::parse_results_csv(&csv).unwrap();
    for dist in ["dirichlet-multinomial", "m-inflated"] {
        let svg = std::fs::read_to_string(plots.join(format!("rmse_{dist}.svg"))).unwrap();
        assert!(svg.contains(">ρ<") && svg.contains(">RMSE<"));
        assert!(svg.contains("λ = 2/3"));
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 2);
        for (lambda, pts) in lines {
            let mut rmse: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.dist == dist && p.lambda == lambda)
                .map(|p| (p.rho, p.rmse))
                .collect();
            rmse.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_eq!(pts.len(), rmse.len());
            // x increases with ρ; screen y decreases exactly when RMSE increases.
            for k in 1..pts.len() {
                assert!(pts[k].0 > pts[k - 1].0);
                assert_eq!(pts[k].1 < pts[k - 1].1, rmse[k].1 > rmse[k - 1].1);
            }
        }
    }
}
