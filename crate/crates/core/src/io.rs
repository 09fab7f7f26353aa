//! Text formats: survey CSV input, cluster tables, experiment configs,
//! result tables and SVG plots.
//!
//! # Survey CSV
//!
//! Comma-separated with a header row; blank lines and lines starting with
//! `#` are ignored. Columns are matched by name:
//!
//! * `domain`: domain label (required, first column).
//! * design: either numeric `x1, …, xk` (the intercept is implicit) or
//!   categorical `factorA, factorB`, dummy coded with the first level seen
//!   as reference.
//! * `weight`: domain weight on any positive scale, normalised on input.
//!   Optional when counts are given, in which case `n` is used.
//! * response: either `p_hat`, or counts `n1` (successes) and `n`.
//!
//! # Cluster CSV
//!
//! Header `cluster,d1_success,d1_failure,…,dI_success,dI_failure`, one row
//! of non-negative integer counts per cluster.
//!
//! # Results CSV
//!
//! `dist,rho,lambda,reps_used,redraws,nonconverged,rmse,rmse_b0,…,rmse_bk`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ExperimentResultRow};
use crate::glm::{factor_design, ClusterTable, DomainCounts, SurveyDataset};
use crate::overdispersed::{balanced_sizes, ClusterDistribution};

/// Fixed leading columns of the results CSV.
pub const RESULTS_COLUMNS: [&str; 7] = [
    "dist",
    "rho",
    "lambda",
    "reps_used",
    "redraws",
    "nonconverged",
    "rmse",
];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Parses a real number, also accepting fractions such as `2/3`.
pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        return Some(num / den);
    }
    text.parse().ok()
}

/// A comma-separated list of numbers.
pub fn parse_number_list(text: &str) -> Option<Vec<f64>> {
    text.split(',').map(parse_number).collect()
}

/// A survey CSV after ingestion.
#[derive(Debug, Clone)]
pub struct SurveyInput {
    pub domains: Vec<String>,
    /// One name per design column, intercept first.
    pub coefficient_names: Vec<String>,
    pub dataset: SurveyDataset,
}

enum DesignColumns {
    Numeric(Vec<usize>),
    Factors(usize, usize),
}

/// Reads the survey CSV format described in the module docs.
pub fn parse_survey_csv(text: &str) -> Result<SurveyInput> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "input is empty"))?;
    let names = split_fields(header);
    let mut index = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if index.insert(*name, i).is_some() {
            return Err(parse_err(header_line, format!("duplicate column '{name}'")));
        }
    }
    let col = |name: &str| index.get(name).copied();

    if names.first() != Some(&"domain") {
        return Err(parse_err(header_line, "first column must be 'domain'"));
    }
    let mut numeric: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| {
            n.strip_prefix('x')
                .and_then(|d| d.parse::<usize>().ok())
                .map(|k| (k, i))
        })
        .collect();
    numeric.sort();
    let design = match (col("factorA"), col("factorB"), numeric.is_empty()) {
        (Some(a), Some(b), true) => DesignColumns::Factors(a, b),
        (None, None, false) => {
            if numeric.iter().enumerate().any(|(j, (k, _))| *k != j + 1) {
                return Err(parse_err(header_line, "numeric design columns must be x1..xk"));
            }
            DesignColumns::Numeric(numeric.iter().map(|(_, i)| *i).collect())
        }
        (None, None, true) => {
            return Err(parse_err(
                header_line,
                "no design columns: expected x1..xk or factorA,factorB",
            ))
        }
        _ => {
            return Err(parse_err(
                header_line,
                "use either x1..xk or both factorA and factorB",
            ))
        }
    };
    let weight_col = col("weight");
    let p_col = col("p_hat");
    let count_cols = match (col("n1"), col("n")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(parse_err(header_line, "counts need both 'n1' and 'n'")),
    };
    match (p_col, count_cols) {
        (Some(_), Some(_)) => return Err(parse_err(header_line, "give either p_hat or n1,n, not both")),
        (None, None) => return Err(parse_err(header_line, "missing response: p_hat or n1,n")),
        (Some(_), None) if weight_col.is_none() => {
            return Err(parse_err(header_line, "p_hat input needs a 'weight' column"))
        }
        _ => {}
    }
    let known = |name: &str| {
        matches!(name, "domain" | "factorA" | "factorB" | "weight" | "p_hat" | "n1" | "n")
            || numeric.iter().any(|(_, i)| names[*i] == name)
    };
    if let Some(bad) = names.iter().find(|n| !known(n)) {
        return Err(parse_err(header_line, format!("unknown column '{bad}'")));
    }

    let mut domains = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut levels_a: Vec<String> = Vec::new();
    let mut levels_b: Vec<String> = Vec::new();
    let mut codes: Vec<(usize, usize)> = Vec::new();
    let mut weights = Vec::new();
    let mut props = Vec::new();
    let mut counts = Vec::new();

    for (line, row) in lines {
        let fields = split_fields(row);
        if fields.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", names.len(), fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            parse_number(fields[i])
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("'{}' is not a number in column '{}'", fields[i], names[i])))
        };
        let int = |i: usize| -> Result<u64> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("'{}' is not a count in column '{}'", fields[i], names[i])))
        };
        domains.push(fields[0].to_string());
        match &design {
            DesignColumns::Numeric(cols) => {
                x_rows.push(cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
            }
            DesignColumns::Factors(a, b) => {
                let code = |levels: &mut Vec<String>, v: &str| match levels.iter().position(|l| l == v) {
                    Some(p) => p,
                    None => {
                        levels.push(v.to_string());
                        levels.len() - 1
                    }
                };
                codes.push((code(&mut levels_a, fields[*a]), code(&mut levels_b, fields[*b])));
            }
        }
        if let Some(w) = weight_col {
            let w = num(w)?;
            if !(w > 0.0) {
                return Err(parse_err(line, format!("weight must be positive; got {w}")));
            }
            weights.push(w);
        }
        if let Some(p) = p_col {
            let p = num(p)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(parse_err(line, format!("p_hat must lie in [0, 1]; got {p}")));
            }
            props.push(p);
        }
        if let Some((s, t)) = count_cols {
            let c = DomainCounts {
                successes: int(s)?,
                total: int(t)?,
            };
            if c.successes > c.total {
                return Err(parse_err(line, "n1 exceeds n"));
            }
            if c.total == 0 {
                return Err(parse_err(line, "domain has n = 0"));
            }
            counts.push(c);
        }
    }
    if domains.is_empty() {
        return Err(parse_err(header_line, "no data rows"));
    }

    let (x, coefficient_names) = match &design {
        DesignColumns::Numeric(cols) => {
            let k = cols.len();
            let x = DMatrix::from_fn(domains.len(), k + 1, |r, c| if c == 0 { 1.0 } else { x_rows[r][c - 1] });
            let mut names_out = vec!["b0".to_string()];
            names_out.extend(cols.iter().map(|&c| names[c].to_string()));
            (x, names_out)
        }
        DesignColumns::Factors(_, _) => {
            let a: Vec<usize> = codes.iter().map(|c| c.0).collect();
            let b: Vec<usize> = codes.iter().map(|c| c.1).collect();
            let x = factor_design(&a, levels_a.len(), &b, levels_b.len())?;
            let mut names_out = vec!["b0".to_string()];
            names_out.extend(levels_a.iter().skip(1).map(|l| format!("factorA:{l}")));
            names_out.extend(levels_b.iter().skip(1).map(|l| format!("factorB:{l}")));
            (x, names_out)
        }
    };

    let dataset = if count_cols.is_some() {
        let mut ds = SurveyDataset::from_counts(x.clone(), counts.clone())?;
        if weight_col.is_some() {
            let p_hat = ds.p_hat().to_vec();
            ds = SurveyDataset::from_raw_weights(x, &weights, p_hat)?;
        }
        ds
    } else {
        SurveyDataset::from_raw_weights(x, &weights, props)?
    };
    Ok(SurveyInput {
        domains,
        coefficient_names,
        dataset,
    })
}

/// Writes domain totals of a simulated sample in the survey CSV format.
pub fn write_survey_csv(
    labels_a: &[String],
    labels_b: &[String],
    counts: &[DomainCounts],
    comment: Option<&str>,
) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("domain,factorA,factorB,weight,n1,n\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i + 1,
            labels_a[i],
            labels_b[i],
            c.total,
            c.successes,
            c.total
        );
    }
    out
}

pub fn write_cluster_csv(table: &ClusterTable) -> String {
    let mut out = String::from("cluster");
    for d in 1..=table.domains() {
        let _ = write!(out, ",d{d}_success,d{d}_failure");
    }
    out.push('\n');
    for (j, row) in table.rows().iter().enumerate() {
        let _ = write!(out, "{}", j + 1);
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_cluster_csv(text: &str) -> Result<ClusterTable> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "cluster file is empty"))?;
    let width = split_fields(header).len();
    if width < 3 || (width - 1) % 2 != 0 {
        return Err(parse_err(
            header_line,
            "expected 'cluster' followed by success/failure pairs",
        ));
    }
    let mut rows = Vec::new();
    for (line, row) in lines {
        let fields = split_fields(row);
        if fields.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", fields.len())));
        }
        let counts = fields[1..]
            .iter()
            .map(|f| f.parse::<u64>().map_err(|_| parse_err(line, format!("'{f}' is not a count"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(counts);
    }
    if rows.is_empty() {
        return Err(parse_err(header_line, "no cluster rows"));
    }
    ClusterTable::new(rows)
}

/// Reads a `key = value` experiment configuration on top of the Family
/// Expenditure defaults. Unknown keys are errors.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::family_expenditure(0);
    let mut clusters: Option<(usize, usize)> = None;
    let mut total: Option<(usize, u64)> = None;
    let mut explicit_sizes = false;
    for (line, row) in content_lines(text) {
        let (key, value) = row
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        let numbers = || parse_number_list(value).ok_or_else(|| parse_err(line, format!("bad number list for '{key}'")));
        let integer = || value.parse::<u64>().map_err(|_| parse_err(line, format!("'{key}' needs a non-negative integer")));
        match key {
            "distributions" => {
                config.distributions = value
                    .split(',')
                    .map(|d| d.parse::<ClusterDistribution>())
                    .collect::<Result<_>>()
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
            "rho_grid" => config.rho_grid = numbers()?,
            "lambda_grid" => config.lambda_grid = numbers()?,
            "replicates" => config.replicates = integer()? as usize,
            "seed" => config.seed = integer()?,
            "clusters" => clusters = Some((line, integer()? as usize)),
            "total" => total = Some((line, integer()?)),
            "cluster_sizes" => {
                config.cluster_sizes = value
                    .split(',')
                    .map(|v| v.trim().parse::<u64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(line, "cluster_sizes needs integers"))?;
                explicit_sizes = true;
            }
            "beta0" => config.beta0 = Some(numbers()?),
            "cells" => config.cells = numbers()?,
            other => return Err(parse_err(line, format!("unknown key '{other}'"))),
        }
    }
    if clusters.is_some() || total.is_some() {
        if explicit_sizes {
            let line = clusters.or(total.map(|(l, t)| (l, t as usize))).map_or(0, |c| c.0);
            return Err(parse_err(line, "give either cluster_sizes or clusters/total"));
        }
        let j = clusters.map_or(config.cluster_sizes.len(), |c| c.1);
        let n = total.map_or(config.cluster_sizes.iter().sum(), |t| t.1);
        let line = clusters.map_or(0, |c| c.0).max(total.map_or(0, |t| t.0));
        config.cluster_sizes = balanced_sizes(j, n).map_err(|e| parse_err(line, e.to_string()))?;
    }
    config.validate()?;
    Ok(config)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Serialises experiment rows as the results CSV.
pub fn write_results_csv(rows: &[ExperimentResultRow]) -> String {
    let k = rows.first().map_or(0, |r| r.rmse_per_coefficient.len());
    let mut out = RESULTS_COLUMNS.join(",");
    for j in 0..k {
        let _ = write!(out, ",rmse_b{j}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.dist,
            fmt_num(r.rho),
            fmt_num(r.lambda),
            r.replicates_used,
            r.redraws,
            r.nonconverged,
            fmt_num(r.rmse)
        );
        for v in &r.rmse_per_coefficient {
            let _ = write!(out, ",{}", fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// One results row as needed for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultPoint {
    pub dist: String,
    pub rho: f64,
    pub lambda: f64,
    pub rmse: f64,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultPoint>> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "results file is empty"))?;
    let names = split_fields(header);
    let find = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| parse_err(header_line, format!("missing column '{name}'")))
    };
    let (d, r, l, e) = (find("dist")?, find("rho")?, find("lambda")?, find("rmse")?);
    let mut points = Vec::new();
    for (line, row) in lines {
        let fields = split_fields(row);
        if fields.len() != names.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", names.len(), fields.len())));
        }
        let num = |i: usize| {
            parse_number(fields[i]).ok_or_else(|| parse_err(line, format!("'{}' is not a number", fields[i])))
        };
        points.push(ResultPoint {
            dist: fields[d].to_string(),
            rho: num(r)?,
            lambda: num(l)?,
            rmse: num(e)?,
        });
    }
    Ok(points)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn lambda_label(lambda: f64) -> String {
    if (lambda - 2.0 / 3.0).abs() < 1e-12 {
        "2/3".to_string()
    } else {
        format!("{lambda}")
    }
}

/// Plot geometry shared by the SVG writer and its readers.
#[derive(Debug, Clone, Copy)]
pub struct PlotFrame {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl Default for PlotFrame {
    fn default() -> Self {
        PlotFrame {
            width: 640.0,
            height: 420.0,
            left: 70.0,
            right: 140.0,
            top: 40.0,
            bottom: 60.0,
        }
    }
}

/// RMSE against `ρ`, one polyline per `λ`, for the rows of one distribution.
pub fn render_rmse_svg(title: &str, points: &[ResultPoint]) -> String {
    let frame = PlotFrame::default();
    let mut lambdas: Vec<f64> = Vec::new();
    for p in points {
        if !lambdas.contains(&p.lambda) {
            lambdas.push(p.lambda);
        }
    }
    let finite = points.iter().filter(|p| p.rmse.is_finite());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y_max: f64 = 0.0;
    for p in finite {
        x_min = x_min.min(p.rho);
        x_max = x_max.max(p.rho);
        y_max = y_max.max(p.rmse);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if x_max - x_min < 1e-12 {
        x_min -= 0.05;
        x_max += 0.05;
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    let y_top = y_max * 1.1;
    let plot_w = frame.width - frame.left - frame.right;
    let plot_h = frame.height - frame.top - frame.bottom;
    let sx = |x: f64| frame.left + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| frame.top + (1.0 - y / y_top) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        frame.width, frame.height, frame.width, frame.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
        frame.left + plot_w / 2.0
    );
    let x0 = frame.left;
    let y0 = frame.top + plot_h;
    let _ = writeln!(
        svg,
        r#"<path class="axes" d="M{x0},{} L{x0},{y0} L{},{y0}" stroke="black" fill="none"/>"#,
        frame.top,
        frame.left + plot_w
    );
    for i in 0..=5 {
        let y = y_top * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            sy(y) + 4.0,
            y
        );
        let x = x_min + (x_max - x_min) * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.2}</text>"#,
            sx(x),
            y0 + 18.0,
            x
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">ρ</text>"#,
        frame.left + plot_w / 2.0,
        frame.height - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="ylabel" x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">RMSE</text>"#,
        frame.top + plot_h / 2.0,
        frame.top + plot_h / 2.0
    );

    for (k, &lambda) in lambdas.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut curve: Vec<&ResultPoint> = points
            .iter()
            .filter(|p| p.lambda == lambda && p.rmse.is_finite())
            .collect();
        curve.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        let coords: Vec<String> = curve
            .iter()
            .map(|p| format!("{:.3},{:.3}", sx(p.rho), sy(p.rmse)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" data-lambda="{}" points="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#,
            lambda,
            coords.join(" ")
        );
        for p in &curve {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{colour}" data-rho="{}" data-rmse="{}"/>"#,
                sx(p.rho),
                sy(p.rmse),
                p.rho,
                p.rmse
            );
        }
        let ly = frame.top + 10.0 + 20.0 * k as f64;
        let lx = frame.width - frame.right + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text class="legend" x="{}" y="{}">λ = {}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            lambda_label(lambda)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One SVG per distribution, keyed by distribution name, in first-seen order.
pub fn render_rmse_plots(points: &[ResultPoint]) -> Vec<(String, String)> {
    let mut dists: Vec<&str> = Vec::new();
    for p in points {
        if !dists.contains(&p.dist.as_str()) {
            dists.push(&p.dist);
        }
    }
    dists
        .into_iter()
        .map(|d| {
            let subset: Vec<ResultPoint> = points.iter().filter(|p| p.dist == d).cloned().collect();
            (d.to_string(), render_rmse_svg(&format!("RMSE of β̂: {d}"), &subset))
        })
        .collect()
}

/// Fitted coefficients for one λ (or the IRLS fit), as rows of a report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    pub beta: DVector<f64>,
    pub converged: bool,
}

/// Whitespace-aligned coefficient table.
pub fn format_coefficient_table(names: &[String], rows: &[ReportRow], digits: usize) -> String {
    let width = (digits + 4).max(names.iter().map(String::len).max().unwrap_or(0)) + 2;
    let mut out = format!("{:<8}", "lambda");
    for n in names {
        let _ = write!(out, "{n:>width$}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<8}", r.label);
        for b in r.beta.iter() {
            let _ = write!(out, "{:>width$.digits$}", b);
        }
        if !r.converged {
            out.push_str("  (not converged)");
        }
        out.push('\n');
    }
    out
}

/// A square matrix with row and column labels.
pub fn format_matrix(names: &[String], m: &DMatrix<f64>, digits: usize) -> String {
    let width = (digits + 6).max(names.iter().map(String::len).max().unwrap_or(0)) + 2;
    let mut out = format!("{:<14}", "");
    for n in names {
        let _ = write!(out, "{n:>width$}");
    }
    out.push('\n');
    for (i, n) in names.iter().enumerate() {
        let _ = write!(out, "{n:<14}");
        for j in 0..m.ncols() {
            let _ = write!(out, "{:>width$.digits$}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}
