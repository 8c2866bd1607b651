//! Revenue-gain sweeps over ε and their log-log regression.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::delayed::{build_delayed, choose_mu};
use crate::deterministic::optimal_det;
use crate::distributions::ValueDistribution;
use crate::dual::optimize_beta;
use crate::error::{domain, Error, Result};
use crate::lp::{discretize, solve, LpStatus};
use crate::mechanism::{expected_revenue, verify, VERIFY_TOL};
use crate::numeric::{logspace, loglog_slope};

/// Default sweep: 8 log-spaced points in `[1e-5, 1e-2]`.
pub fn default_eps_grid() -> Vec<f64> {
    logspace(1e-5, 1e-2, 8)
}

#[derive(Debug, Clone)]
pub struct ScalingOptions {
    /// Envelope exponent; defaults to the distribution's.
    pub alpha: Option<f64>,
    pub with_lp: bool,
    pub lp_n: usize,
    /// Value-grid size for verification of each delayed mechanism.
    pub verify_grid: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            alpha: None,
            with_lp: false,
            lp_n: 60,
            verify_grid: 2_000,
        }
    }
}

/// One row of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub det_reserve: f64,
    pub det_gain: f64,
    pub mu: f64,
    pub delta: f64,
    pub delayed_gain: f64,
    pub verified: bool,
    pub min_ic_slack: f64,
    pub beta: f64,
    pub dual_gain_bound: f64,
    pub lp_gain: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FittedSlopes {
    pub det: f64,
    pub delayed: f64,
    pub dual: f64,
    pub lp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub eps_grid: Vec<f64>,
    pub det_gains: Vec<f64>,
    pub delayed_gains: Vec<f64>,
    pub dual_gain_bounds: Vec<f64>,
    pub lp_gains: Option<Vec<f64>>,
    pub fitted_slopes: FittedSlopes,
    pub predicted_slope: f64,
    pub rows: Vec<ScalingRow>,
}

fn run_point(dist: &ValueDistribution, eps: f64, alpha: f64, opts: &ScalingOptions) -> ScalingRow {
    let (_, r_star) = dist.optimal_price();
    let mut row = ScalingRow {
        eps,
        det_reserve: f64::NAN,
        det_gain: f64::NAN,
        mu: f64::NAN,
        delta: f64::NAN,
        delayed_gain: f64::NAN,
        verified: false,
        min_ic_slack: f64::NAN,
        beta: f64::NAN,
        dual_gain_bound: f64::NAN,
        lp_gain: None,
        error: None,
    };
    let mut errors = Vec::new();
    match optimal_det(dist, eps) {
        Ok(d) => {
            row.det_reserve = d.reserve;
            row.det_gain = d.gain;
        }
        Err(e) => errors.push(format!("det: {e}")),
    }
    let delayed = choose_mu(eps, alpha, dist).and_then(|c| build_delayed(dist, eps, c.mu));
    match delayed {
        Ok((mech, _, params)) => {
            row.mu = params.mu;
            row.delta = params.delta;
            match verify(&mech, dist, eps, opts.verify_grid, VERIFY_TOL) {
                Ok(rep) => {
                    row.verified = rep.passed;
                    row.min_ic_slack = rep.min_ic_slack;
                    if rep.passed {
                        row.delayed_gain = expected_revenue(&mech, dist) - r_star;
                    } else {
                        errors.push(format!("delayed: verification failed (IC slack {:e})", rep.min_ic_slack));
                    }
                }
                Err(e) => errors.push(format!("verify: {e}")),
            }
        }
        Err(e) => errors.push(format!("delayed: {e}")),
    }
    match optimize_beta(dist, eps, alpha) {
        Ok((beta, cert)) => {
            row.beta = beta;
            row.dual_gain_bound = cert.bound - r_star;
        }
        Err(e) => errors.push(format!("dual: {e}")),
    }
    if opts.with_lp {
        match discretize(dist, opts.lp_n, eps).map(|inst| solve(&inst)) {
            Ok(sol) if sol.status == LpStatus::Optimal => row.lp_gain = Some(sol.value - r_star),
            Ok(sol) => errors.push(format!("lp: {:?}", sol.status)),
            Err(e) => errors.push(format!("lp: {e}")),
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Runs every ε point (in parallel), then fits log-log slopes on the rows
/// whose delayed mechanism passed verification.
pub fn run_scaling(dist: &ValueDistribution, eps_grid: &[f64], opts: &ScalingOptions) -> Result<ScalingReport> {
    if eps_grid.len() < 5 {
        return domain("scaling needs at least 5 eps points");
    }
    let alpha = match opts.alpha.or_else(|| dist.envelope().map(|e| e.alpha)) {
        Some(a) => a,
        None => return domain("scaling needs an envelope exponent"),
    };
    let mut grid = eps_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let rows: Vec<ScalingRow> = grid.par_iter().map(|&e| run_point(dist, e, alpha, opts)).collect();
    let fit = |pick: &dyn Fn(&ScalingRow) -> f64| {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.verified)
            .map(|r| (r.eps, pick(r)))
            .unzip();
        loglog_slope(&x, &y).unwrap_or(f64::NAN)
    };
    let fitted_slopes = FittedSlopes {
        det: fit(&|r| r.det_gain),
        delayed: fit(&|r| r.delayed_gain),
        dual: fit(&|r| r.dual_gain_bound),
        lp: if opts.with_lp {
            Some(fit(&|r| r.lp_gain.unwrap_or(f64::NAN)))
        } else {
            None
        },
    };
    Ok(ScalingReport {
        alpha,
        eps_grid: grid,
        det_gains: rows.iter().map(|r| r.det_gain).collect(),
        delayed_gains: rows.iter().map(|r| r.delayed_gain).collect(),
        dual_gain_bounds: rows.iter().map(|r| r.dual_gain_bound).collect(),
        lp_gains: opts
            .with_lp
            .then(|| rows.iter().map(|r| r.lp_gain.unwrap_or(f64::NAN)).collect()),
        fitted_slopes,
        predicted_slope: alpha / (2.0 * alpha - 1.0),
        rows,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.15e}")
    }
}

/// One CSV row per ε with every per-point quantity.
pub fn write_rows_csv(report: &ScalingReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "eps",
        "det_reserve",
        "det_gain",
        "mu",
        "delta",
        "delayed_gain",
        "verified",
        "min_ic_slack",
        "beta",
        "dual_gain_bound",
        "lp_gain",
        "error",
    ])
    .map_err(csv_err(path))?;
    for r in &report.rows {
        w.write_record([
            fmt(r.eps),
            fmt(r.det_reserve),
            fmt(r.det_gain),
            fmt(r.mu),
            fmt(r.delta),
            fmt(r.delayed_gain),
            r.verified.to_string(),
            fmt(r.min_ic_slack),
            fmt(r.beta),
            fmt(r.dual_gain_bound),
            r.lp_gain.map(fmt).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Plot series: one row per ε with the gain curves and three reference lines
/// (`ε`, `ε^{α/(2α−1)}`, `ε^{1/2}`), each anchored at the first point of the
/// curve it is compared with.
pub fn emit_plotdata(report: &ScalingReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let with_lp = report.lp_gains.is_some();
    let mut header = vec!["eps", "det", "delayed", "dual"];
    if with_lp {
        header.push("lp");
    }
    header.extend(["ref_linear", "ref_rate", "ref_sqrt"]);
    w.write_record(&header).map_err(csv_err(path))?;
    let e0 = report.eps_grid.first().copied().unwrap_or(1.0);
    let anchor = |v: &[f64]| v.first().copied().unwrap_or(f64::NAN);
    let (d0, m0, u0) = (
        anchor(&report.det_gains),
        anchor(&report.delayed_gains),
        anchor(&report.dual_gain_bounds),
    );
    for (i, &e) in report.eps_grid.iter().enumerate() {
        let ratio = e / e0;
        let mut rec = vec![
            fmt(e),
            fmt(report.det_gains[i]),
            fmt(report.delayed_gains[i]),
            fmt(report.dual_gain_bounds[i]),
        ];
        if let Some(lp) = &report.lp_gains {
            rec.push(fmt(lp[i]));
        }
        rec.push(fmt(d0 * ratio));
        rec.push(fmt(m0 * ratio.powf(report.predicted_slope)));
        rec.push(fmt(u0 * ratio.sqrt()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `rows.csv`, `plot.csv` and `summary.json` into `dir`.
pub fn write_outputs(report: &ScalingReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_rows_csv(report, &dir.join("rows.csv"))?;
    emit_plotdata(report, &dir.join("plot.csv"))?;
    let summary = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(&summary, text).map_err(io_err(&summary))
}
