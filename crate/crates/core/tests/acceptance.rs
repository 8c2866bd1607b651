//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always show.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use epsmech::delayed::{build_delayed, choose_mu, dde_oracle, DelayedParams};
use epsmech::deterministic::optimal_det;
use epsmech::dual::{lambda_ic, optimize_beta};
use epsmech::gamma::{gamma, renewal_oracle};
use epsmech::harness::{default_eps_grid, run_scaling, write_outputs, ScalingOptions};
use epsmech::lp::{discretize, solve, LpStatus};
use epsmech::mechanism::{expected_revenue, nisan_bound, verify, Mechanism, VERIFY_TOL};
use epsmech::numeric::{logspace, loglog_slope};
use epsmech::ValueDistribution;
use rayon::prelude::*;

const EPS_SET: [f64; 3] = [1e-2, 1e-3, 1e-4];
const LP_N: usize = 150;

struct Outcome {
    passed: bool,
    detail: String,
}

fn config(name: &str) -> ValueDistribution {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ValueDistribution::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn instances() -> Vec<(&'static str, ValueDistribution)> {
    vec![
        ("uniform", config("uniform.json")),
        ("alpha1.5", config("envelope-alpha1.5.json")),
        ("alpha2", config("envelope-alpha2.json")),
        ("alpha3", config("envelope-alpha3.json")),
    ]
}

fn alpha_of(d: &ValueDistribution) -> f64 {
    d.envelope().expect("instances carry an envelope").alpha
}

struct Built {
    name: &'static str,
    dist: ValueDistribution,
    eps: f64,
    mech: Mechanism,
    params: DelayedParams,
}

fn build_all() -> Result<Vec<Built>, String> {
    let mut out = Vec::new();
    for (name, dist) in instances() {
        for eps in EPS_SET {
            let mu = choose_mu(eps, alpha_of(&dist), &dist).map_err(|e| format!("{name} eps={eps}: {e}"))?.mu;
            let (mech, _, params) = build_delayed(&dist, eps, mu).map_err(|e| format!("{name} eps={eps}: {e}"))?;
            out.push(Built {
                name,
                dist: dist.clone(),
                eps,
                mech,
                params,
            });
        }
    }
    Ok(out)
}

fn baseline() -> Outcome {
    let d = config("uniform.json");
    let (p, r) = d.optimal_price();
    let psi = d.virtual_value(0.5).unwrap_or(f64::NAN);
    Outcome {
        passed: (p - 0.5).abs() <= 1e-10 && (r - 0.25).abs() <= 1e-10 && psi.abs() <= 1e-10,
        detail: format!("p*={p:.12} R*={r:.12} psi(0.5)={psi:.1e}"),
    }
}

fn deterministic_regime() -> Outcome {
    let d = config("uniform.json");
    let (p, _) = d.optimal_price();
    let (sf, f_bar) = (d.sf(p), d.pdf_max());
    let grid = logspace(1e-4, 1e-2, 9);
    let mut gains = Vec::new();
    let mut bounds_ok = true;
    for &eps in &grid {
        match optimal_det(&d, eps) {
            Ok(o) => {
                bounds_ok &= sf * eps - f_bar * eps * eps <= o.gain && o.gain <= eps;
                gains.push(o.gain);
            }
            Err(_) => bounds_ok = false,
        }
    }
    let slope = loglog_slope(&grid, &gains).unwrap_or(f64::NAN);
    Outcome {
        passed: bounds_ok && (slope - 1.0).abs() <= 0.02,
        detail: format!("bounds {} slope={slope:.4}", if bounds_ok { "hold" } else { "violated" }),
    }
}

fn feasibility(built: &[Built]) -> Outcome {
    let mut bad = Vec::new();
    let mut worst_slack = f64::INFINITY;
    for b in built {
        let p = &b.params;
        let rep = match verify(&b.mech, &b.dist, b.eps, 2_000, VERIFY_TOL) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("{} eps={}: {e}", b.name, b.eps));
                continue;
            }
        };
        worst_slack = worst_slack.min(rep.min_ir_slack.min(rep.min_ic_slack + b.eps));
        let slack_ok = rep.min_ir_slack >= -1e-8 && rep.min_ic_slack >= -b.eps - 1e-8;
        let top = p.p_star + p.delta;
        let mut prev = 0.0;
        let mut mono = true;
        for i in 0..=20_000 {
            let x = b.mech.alloc(top * i as f64 / 20_000.0);
            mono &= x >= prev;
            prev = x;
        }
        let start = b.mech.alloc(0.0) == b.eps / (p.p_star - p.delta);
        let end = (b.mech.alloc(top - 1e-12) - 1.0).abs() <= 1e-8;
        if !(rep.passed && slack_ok && mono && start && end) {
            bad.push(format!(
                "{} eps={} (verify {}, monotone {mono}, x(0) {start}, x(top) {end})",
                b.name, b.eps, rep.passed
            ));
        }
    }
    Outcome {
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} instances, worst slack beyond eps {worst_slack:.1e}", built.len())
        } else {
            bad.join("; ")
        },
    }
}

fn closed_form(built: &[Built]) -> Outcome {
    let worst = built.iter().map(|b| dde_oracle(&b.params, 2_000)).fold(0.0, f64::max);
    Outcome {
        passed: worst <= 1e-6,
        detail: format!("max deviation {worst:.2e}"),
    }
}

fn gamma_checks() -> Outcome {
    let exact_zero = gamma(0.0) == 1.0;
    let mut bounds = true;
    for i in 0..=30_000 {
        let t = i as f64 * 1e-3;
        let g = gamma(t);
        bounds &= 2.0 * (t + 1.0) * (-1.0 - t).exp() < g && g <= 2.0 * (t + 2.0) * (-(t + 1.0)).exp();
    }
    let mut zs = Vec::new();
    for t in [0.5, 1.5, 5.0] {
        let (mean, se) = renewal_oracle(t, 1_000_000, 20240601);
        zs.push(((t + 1.0f64).exp() * gamma(t) - 1.0 - mean).abs() / se);
    }
    let mc = zs.iter().all(|&z| z <= 3.0);
    Outcome {
        passed: exact_zero && bounds && mc,
        detail: format!(
            "gamma(0)=1 {exact_zero}, bounds {bounds}, z-scores {}",
            zs.iter().map(|z| format!("{z:.2}")).collect::<Vec<_>>().join("/")
        ),
    }
}

struct Measured {
    eps: f64,
    nisan: f64,
    lp_gain: f64,
    delayed_gain: f64,
}

fn dual_validity(built: &[Built]) -> (Outcome, Vec<Measured>) {
    let rows: Vec<Result<(Measured, String), String>> = built
        .par_iter()
        .map(|b| {
            let tag = format!("{} eps={}", b.name, b.eps);
            let (_, r_star) = b.dist.optimal_price();
            let slack = b.dist.v_bar() * b.dist.pdf_max() / LP_N as f64;
            let (_, cert) = optimize_beta(&b.dist, b.eps, alpha_of(&b.dist)).map_err(|e| format!("{tag}: {e}"))?;
            let lp = solve(&discretize(&b.dist, LP_N, b.eps).map_err(|e| format!("{tag}: {e}"))?);
            if lp.status != LpStatus::Optimal {
                return Err(format!("{tag}: lp {:?}", lp.status));
            }
            let delayed = expected_revenue(&b.mech, &b.dist);
            let mut residual: f64 = 0.0;
            for i in 0..1000 {
                let v = cert.mu + (cert.nu0 - cert.mu) * (i as f64 + 0.5) / 1000.0;
                let lhs = lambda_ic(&cert, &b.dist, v).map_err(|e| format!("{tag}: {e}"))?;
                let next = lambda_ic(&cert, &b.dist, cert.w(v)).map_err(|e| format!("{tag}: {e}"))?;
                residual = residual.max((lhs - b.dist.pdf(v) - cert.slope(v) * next).abs());
            }
            let chain = cert.bound >= lp.value - 2.0 * slack && lp.value - 2.0 * slack >= delayed - 4.0 * slack;
            let phi1 = cert.phi1 <= b.eps * (cert.k as f64 + 1.0);
            let note = if chain && phi1 && residual <= 1e-8 {
                String::new()
            } else {
                format!(
                    "{tag}: dual {:.6} lp {:.6} delayed {:.6} residual {residual:.1e} phi1 {phi1}",
                    cert.bound, lp.value, delayed
                )
            };
            let measured = Measured {
                eps: b.eps,
                nisan: nisan_bound(&b.dist, b.eps).map_err(|e| format!("{tag}: {e}"))?,
                lp_gain: lp.value - r_star,
                delayed_gain: delayed - r_star,
            };
            Ok((measured, note))
        })
        .collect();
    let mut notes = Vec::new();
    let mut measured = Vec::new();
    for r in rows {
        match r {
            Ok((m, note)) => {
                if !note.is_empty() {
                    notes.push(note);
                }
                measured.push(m);
            }
            Err(e) => notes.push(e),
        }
    }
    let outcome = Outcome {
        passed: notes.is_empty(),
        detail: if notes.is_empty() {
            format!("{} instances at n={LP_N}", measured.len())
        } else {
            notes.join("; ")
        },
    };
    (outcome, measured)
}

fn scaling_law(measured: &mut Vec<Measured>) -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, dist) in instances().into_iter().skip(1) {
        let alpha = alpha_of(&dist);
        let opts = ScalingOptions {
            alpha: Some(alpha),
            ..ScalingOptions::default()
        };
        let rep = match run_scaling(&dist, &default_eps_grid(), &opts) {
            Ok(r) => r,
            Err(e) => {
                passed = false;
                parts.push(format!("{name}: {e}"));
                continue;
            }
        };
        let slope = rep.fitted_slopes.delayed;
        let all_verified = rep.rows.iter().all(|r| r.verified);
        let beats = rep
            .rows
            .iter()
            .filter(|r| r.eps <= 1e-3 * (1.0 + 1e-12))
            .all(|r| r.delayed_gain > r.det_gain);
        passed &= all_verified && beats && (slope - rep.predicted_slope).abs() <= 0.08;
        parts.push(format!(
            "{name} slope {slope:.3} vs {:.3}{}{}",
            rep.predicted_slope,
            if beats { "" } else { " (floors not beaten)" },
            if all_verified { "" } else { " (unverified rows)" }
        ));
        for r in &rep.rows {
            if let Ok(nisan) = nisan_bound(&dist, r.eps) {
                measured.push(Measured {
                    eps: r.eps,
                    nisan,
                    lp_gain: f64::NEG_INFINITY,
                    delayed_gain: r.delayed_gain,
                });
            }
        }
    }
    Outcome {
        passed,
        detail: parts.join(", "),
    }
}

fn nisan(measured: &[Measured]) -> Outcome {
    let bad: Vec<String> = measured
        .iter()
        .filter(|m| !(m.nisan >= m.lp_gain && m.nisan >= m.delayed_gain))
        .map(|m| format!("eps={} bound {:.4} lp {:.4} delayed {:.4}", m.eps, m.nisan, m.lp_gain, m.delayed_gain))
        .collect();
    Outcome {
        passed: bad.is_empty() && !measured.is_empty(),
        detail: if bad.is_empty() {
            format!("{} measured points below the bound", measured.len())
        } else {
            bad.join("; ")
        },
    }
}

fn determinism() -> Outcome {
    let dist = config("envelope-alpha2.json");
    let opts = ScalingOptions {
        with_lp: true,
        lp_n: 30,
        ..ScalingOptions::default()
    };
    let run = |threads: usize| -> Result<Vec<Vec<u8>>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let rep = pool.install(|| run_scaling(&dist, &default_eps_grid(), &opts)).map_err(|e| e.to_string())?;
        write_outputs(&rep, dir.path()).map_err(|e| e.to_string())?;
        ["rows.csv", "plot.csv", "summary.json"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let mc = renewal_oracle(1.5, 100_000, 20240601) == renewal_oracle(1.5, 100_000, 20240601);
    match (run(1), run(1), run(3)) {
        (Ok(a), Ok(b), Ok(c)) => Outcome {
            passed: a == b && a == c && mc,
            detail: format!(
                "repeat identical {}, thread-count identical {}, seeded oracle identical {mc}",
                a == b,
                a == c
            ),
        },
        (a, b, c) => Outcome {
            passed: false,
            detail: [a.err(), b.err(), c.err()].into_iter().flatten().collect::<Vec<_>>().join("; "),
        },
    }
}

fn report(id: usize, limit: Duration, start: Instant, out: Outcome) -> bool {
    let took = start.elapsed();
    let ok = out.passed && took <= limit;
    println!(
        "criterion {id}: {} ({:.2} s, limit {} s) {}",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs(),
        out.detail
    );
    ok
}

fn main() -> ExitCode {
    let mut all = true;

    let t = Instant::now();
    all &= report(1, Duration::from_secs(1), t, baseline());

    let t = Instant::now();
    all &= report(2, Duration::from_secs(5), t, deterministic_regime());

    let t = Instant::now();
    let built = build_all();
    let built = match built {
        Ok(b) => {
            all &= report(3, Duration::from_secs(30), t, feasibility(&b));
            let t = Instant::now();
            all &= report(4, Duration::from_secs(30), t, closed_form(&b));
            b
        }
        Err(e) => {
            for id in [3, 4] {
                all &= report(id, Duration::from_secs(30), t, Outcome { passed: false, detail: e.clone() });
            }
            Vec::new()
        }
    };

    let t = Instant::now();
    all &= report(5, Duration::from_secs(20), t, gamma_checks());

    let t = Instant::now();
    let (outcome, mut measured) = if built.is_empty() {
        (Outcome { passed: false, detail: "no instances built".into() }, Vec::new())
    } else {
        dual_validity(&built)
    };
    all &= report(6, Duration::from_secs(300), t, outcome);

    let t = Instant::now();
    all &= report(7, Duration::from_secs(600), t, scaling_law(&mut measured));

    let t = Instant::now();
    all &= report(8, Duration::from_secs(1), t, nisan(&measured));

    let t = Instant::now();
    all &= report(9, Duration::from_secs(120), t, determinism());

    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
