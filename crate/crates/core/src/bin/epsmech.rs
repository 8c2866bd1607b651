use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use epsmech::delayed::{build_delayed, choose_mu, dde_oracle, delayed_revenue};
use epsmech::deterministic::optimal_det;
use epsmech::dual::{dual_value, optimize_beta};
use epsmech::gamma::{gamma, renewal_oracle};
use epsmech::harness::{run_scaling, write_outputs, ScalingOptions};
use epsmech::lp::{discretize, solve, LpStatus};
use epsmech::mechanism::{verify, VERIFY_TOL};
use epsmech::numeric::logspace;
use epsmech::{Mechanism, ValueDistribution};

const THREADS_VAR: &str = "EPSMECH_THREADS";

#[derive(Parser)]
#[command(name = "epsmech", version, about = "Revenue-optimal selling under approximate incentive compatibility")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct DistEps {
    /// Distribution JSON file.
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    eps: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Best deterministic floor mechanism; prints `reserve,value,gain`.
    DetOpt(DistEps),
    /// Perturbed delayed mechanism.
    Delayed {
        #[command(subcommand)]
        cmd: DelayedCmd,
    },
    /// The Γ function, or its self-test against renewal Monte Carlo.
    Gamma {
        #[arg(long)]
        t: Option<f64>,
        #[command(subcommand)]
        cmd: Option<GammaCmd>,
    },
    /// Dual upper-bound certificate.
    Dual {
        #[command(flatten)]
        de: DistEps,
        #[arg(long, conflicts_with = "auto_beta")]
        beta: Option<f64>,
        #[arg(long)]
        auto_beta: bool,
    },
    /// Discretized LP optimum.
    Lp {
        #[command(flatten)]
        de: DistEps,
        #[arg(long)]
        n: usize,
        /// Also write `v,mass,x,t` per grid point to this CSV file.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Revenue-gain sweep over ε with slope fits.
    Scaling {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-5)]
        eps_min: f64,
        #[arg(long, default_value_t = 1e-2)]
        eps_max: f64,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long)]
        with_lp: bool,
        /// LP grid size when `--with-lp` is set.
        #[arg(long, default_value_t = 60)]
        n: usize,
        /// Fail unless the delayed slope is within this distance of the prediction.
        #[arg(long, default_value_t = 0.08)]
        slope_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks IR and ε-IC of a mechanism file.
    Verify {
        #[arg(long)]
        mech: PathBuf,
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 2_000)]
        grid: usize,
    },
}

#[derive(Subcommand)]
enum DelayedCmd {
    /// Prints the mechanism JSON and its verification report.
    Build {
        #[command(flatten)]
        de: DistEps,
        #[arg(long)]
        mu: Option<f64>,
        /// Envelope exponent used to pick μ; defaults to the distribution's.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Subcommand)]
enum GammaCmd {
    /// Compares Γ with its analytic bounds and with renewal Monte Carlo.
    Selftest {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
}

fn load_dist(path: &PathBuf) -> Result<ValueDistribution> {
    ValueDistribution::from_path(path).with_context(|| format!("loading distribution {}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn det_opt(de: &DistEps) -> Result<bool> {
    let dist = load_dist(&de.dist)?;
    let d = optimal_det(&dist, de.eps)?;
    println!("reserve,value,gain");
    println!("{:.15e},{:.15e},{:.15e}", d.reserve, d.value, d.gain);
    Ok(d.gain >= -1e-12)
}

fn delayed_build(de: &DistEps, mu: Option<f64>, alpha: Option<f64>) -> Result<bool> {
    let dist = load_dist(&de.dist)?;
    let mu = match mu {
        Some(m) => m,
        None => {
            let alpha = alpha
                .or_else(|| dist.envelope().map(|e| e.alpha))
                .context("no --mu given and the distribution carries no envelope exponent")?;
            choose_mu(de.eps, alpha, &dist)?.mu
        }
    };
    let (mech, _, params) = build_delayed(&dist, de.eps, mu)?;
    let report = verify(&mech, &dist, de.eps, 2_000, VERIFY_TOL)?;
    let (direct, formula) = delayed_revenue(&dist, &mech, &params);
    let oracle = dde_oracle(&params, 2_000);
    let (_, r_star) = dist.optimal_price();
    let doc = serde_json::json!({
        "mechanism": serde_json::from_str::<serde_json::Value>(&mech.to_json())?,
        "params": params,
        "verification": report,
        "revenue": direct,
        "revenue_formula": formula,
        "gain": direct - r_star,
        "dde_max_deviation": oracle,
    });
    print_json(&doc)?;
    Ok(report.passed && oracle <= 1e-6)
}

fn gamma_value(t: f64) -> Result<bool> {
    if !(t >= 0.0) {
        bail!("--t must be nonnegative");
    }
    println!("t,gamma");
    println!("{t:.15e},{:.17e}", gamma(t));
    Ok(true)
}

fn gamma_selftest(samples: usize, seed: u64) -> Result<bool> {
    let mut ok = gamma(0.0) == 1.0;
    println!("gamma(0) = {:.17e} [{}]", gamma(0.0), verdict(ok));
    let mut worst = f64::INFINITY;
    for i in 0..=30_000 {
        let t = i as f64 * 1e-3;
        let g = gamma(t);
        let lo = 2.0 * (t + 1.0) * (-1.0 - t).exp();
        let hi = 2.0 * (t + 2.0) * (-(t + 1.0)).exp();
        worst = worst.min((g - lo) / lo).min((hi - g) / hi);
    }
    let bounds = worst > 0.0;
    ok &= bounds;
    println!("bounds on [0, 30]: worst relative margin {worst:.3e} [{}]", verdict(bounds));
    println!("t,closed_form,monte_carlo,stderr,z");
    for t in [0.5, 1.5, 5.0] {
        let exact = (t + 1.0f64).exp() * gamma(t) - 1.0;
        let (mean, se) = renewal_oracle(t, samples, seed);
        let z = (exact - mean) / se;
        ok &= z.abs() <= 3.0;
        println!("{t},{exact:.10},{mean:.10},{se:.3e},{z:.3}");
    }
    Ok(ok)
}

fn dual(de: &DistEps, beta: Option<f64>, auto: bool) -> Result<bool> {
    let dist = load_dist(&de.dist)?;
    let cert = match (beta, auto) {
        (Some(b), _) => dual_value(&dist, de.eps, b)?,
        (None, true) => {
            let alpha = dist
                .envelope()
                .map(|e| e.alpha)
                .context("--auto-beta needs an envelope exponent on the distribution")?;
            optimize_beta(&dist, de.eps, alpha)?.1
        }
        (None, false) => bail!("pass --beta <b> or --auto-beta"),
    };
    let (_, r_star) = dist.optimal_price();
    print_json(&cert)?;
    println!("eps,beta,K,phi1,phi2,bound,gain_bound");
    println!(
        "{:.15e},{:.15e},{},{:.15e},{:.15e},{:.15e},{:.15e}",
        cert.eps,
        cert.beta,
        cert.k,
        cert.phi1,
        cert.phi2,
        cert.bound,
        cert.bound - r_star
    );
    Ok(cert.bound.is_finite() && cert.phi1 <= cert.eps * (cert.k as f64 + 1.0))
}

fn lp(de: &DistEps, n: usize, vectors: Option<&PathBuf>) -> Result<bool> {
    let dist = load_dist(&de.dist)?;
    let inst = discretize(&dist, n, de.eps)?;
    let sol = solve(&inst);
    println!("n,eps,value,status,pivots,max_violation");
    println!(
        "{n},{:.15e},{:.15e},{:?},{},{:.3e}",
        de.eps, sol.value, sol.status, sol.pivots, sol.max_violation
    );
    if let Some(path) = vectors {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["v", "mass", "x", "t"])?;
        for i in 0..n {
            w.write_record([
                format!("{:.15e}", inst.values[i]),
                format!("{:.15e}", inst.masses[i]),
                format!("{:.15e}", sol.x[i]),
                format!("{:.15e}", sol.t[i]),
            ])?;
        }
        w.flush()?;
    }
    Ok(sol.status == LpStatus::Optimal)
}

#[allow(clippy::too_many_arguments)]
fn scaling(
    dist: &PathBuf,
    alpha: f64,
    eps_min: f64,
    eps_max: f64,
    points: usize,
    with_lp: bool,
    n: usize,
    slope_tol: f64,
    out: &PathBuf,
) -> Result<bool> {
    let dist = load_dist(dist)?;
    if !(eps_min > 0.0 && eps_min < eps_max) {
        bail!("need 0 < eps-min < eps-max");
    }
    let grid = logspace(eps_min, eps_max, points);
    let opts = ScalingOptions {
        alpha: Some(alpha),
        with_lp,
        lp_n: n,
        ..ScalingOptions::default()
    };
    let report = run_scaling(&dist, &grid, &opts)?;
    write_outputs(&report, out)?;
    let s = report.fitted_slopes;
    println!("alpha,predicted_slope,det_slope,delayed_slope,dual_slope");
    println!("{alpha},{:.6},{:.6},{:.6},{:.6}", report.predicted_slope, s.det, s.delayed, s.dual);
    let gains_ok = report
        .rows
        .iter()
        .filter(|r| r.verified)
        .all(|r| r.det_gain >= -1e-8 && r.delayed_gain >= -1e-8);
    let all_verified = report.rows.iter().all(|r| r.verified);
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("eps {:e}: {}", r.eps, r.error.as_deref().unwrap_or_default());
    }
    Ok(gains_ok && all_verified && (s.delayed - report.predicted_slope).abs() <= slope_tol)
}

fn verify_cmd(mech: &PathBuf, dist: &PathBuf, eps: f64, grid: usize) -> Result<bool> {
    let dist = load_dist(dist)?;
    let mech = Mechanism::from_path(mech).with_context(|| format!("loading mechanism {}", mech.display()))?;
    let report = verify(&mech, &dist, eps, grid, VERIFY_TOL)?;
    print_json(&report)?;
    Ok(report.passed)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.cmd {
        Cmd::DetOpt(de) => det_opt(de),
        Cmd::Delayed {
            cmd: DelayedCmd::Build { de, mu, alpha },
        } => delayed_build(de, *mu, *alpha),
        Cmd::Gamma { t, cmd } => match (t, cmd) {
            (_, Some(GammaCmd::Selftest { samples, seed })) => gamma_selftest(*samples, *seed),
            (Some(t), None) => gamma_value(*t),
            (None, None) => bail!("pass --t <t> or the selftest subcommand"),
        },
        Cmd::Dual { de, beta, auto_beta } => dual(de, *beta, *auto_beta),
        Cmd::Lp { de, n, vectors } => lp(de, *n, vectors.as_ref()),
        Cmd::Scaling {
            dist,
            alpha,
            eps_min,
            eps_max,
            points,
            with_lp,
            n,
            slope_tol,
            out,
        } => scaling(dist, *alpha, *eps_min, *eps_max, *points, *with_lp, *n, *slope_tol, out),
        Cmd::Verify { mech, dist, eps, grid } => verify_cmd(mech, dist, *eps, *grid),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
