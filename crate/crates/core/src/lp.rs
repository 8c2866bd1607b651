//! Brute-force optimum of the ε-IC revenue problem on a finite type grid.
//!
//! Types sit at the midpoints of an `n`-cell partition of `[0, v_bar]` and
//! carry the probability mass of their cell. The linear program is solved in
//! the variables `x_i ∈ [0, 1]` and `s_i = v_i x_i − t_i ≥ 0` (the buyer's
//! truthful utility), which turns IR into a sign constraint and leaves the
//! origin feasible. Of the `n(n−1)` deviation constraints only those that
//! bind are ever loaded into the tableau; the rest are checked afterwards.

use serde::{Deserialize, Serialize};

use crate::delayed::{build_delayed, choose_mu};
use crate::distributions::ValueDistribution;
use crate::dual::optimize_beta;
use crate::error::{domain, Result};
use crate::mechanism::{expected_revenue, Mechanism, MechanismSpec};
use crate::simplex::{maximize, PivotRule, Status};

/// Feasibility tolerance for the independent re-check of a solution.
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpInstance {
    pub values: Vec<f64>,
    pub masses: Vec<f64>,
    pub eps: f64,
    pub v_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub status: LpStatus,
    pub pivots: usize,
    /// Largest constraint violation found by the re-check.
    pub max_violation: f64,
}

impl LpSolution {
    /// The solution as a step-function mechanism on `[0, v_bar]`.
    pub fn mechanism(&self, inst: &LpInstance) -> Result<Mechanism> {
        Mechanism::from_spec(MechanismSpec::LpDiscrete {
            v_bar: inst.v_bar,
            values: inst.values.clone(),
            x: self.x.clone(),
            t: self.t.clone(),
        })
    }
}

/// Midpoint grid with cell masses.
pub fn discretize(dist: &ValueDistribution, n: usize, eps: f64) -> Result<LpInstance> {
    if n < 2 {
        return domain("need at least two grid cells");
    }
    let v_bar = dist.v_bar();
    let h = v_bar / n as f64;
    let values = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let masses = (0..n)
        .map(|i| {
            let right = if i + 1 == n { v_bar } else { (i + 1) as f64 * h };
            dist.cdf(right) - dist.cdf(i as f64 * h)
        })
        .collect();
    Ok(LpInstance {
        values,
        masses,
        eps,
        v_bar,
    })
}

/// Exact optimum of the discretized problem.
pub fn solve(inst: &LpInstance) -> LpSolution {
    solve_with(inst, PivotRule::Dantzig)
}

pub fn solve_with(inst: &LpInstance, rule: PivotRule) -> LpSolution {
    let n = inst.values.len();
    // Constraint generation: start from adjacent-type deviations and add
    // every violated pair until the full ε-IC system holds. The relaxation
    // stays bounded (x ≤ 1, s ≥ 0), so each round is a plain solve.
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| [i.wrapping_sub(1), i + 1].into_iter().filter(move |&j| j < n).map(move |j| (i, j)))
        .collect();
    let mut active = vec![false; n * n];
    for &(i, j) in &pairs {
        active[i * n + j] = true;
    }
    let mut pivots = 0;
    loop {
        let mut out = solve_pairs(inst, &pairs, rule);
        pivots += out.pivots;
        out.pivots = pivots;
        if out.status != LpStatus::Optimal {
            return out;
        }
        let before = pairs.len();
        for i in 0..n {
            let own = inst.values[i] * out.x[i] - out.t[i];
            for j in 0..n {
                let gain = inst.values[i] * out.x[j] - out.t[j] - own - inst.eps;
                if i != j && !active[i * n + j] && gain > GENERATION_TOL {
                    active[i * n + j] = true;
                    pairs.push((i, j));
                }
            }
        }
        if pairs.len() == before {
            return finish(inst, out);
        }
    }
}

/// Violation above which a missing pair is added to the working set.
const GENERATION_TOL: f64 = 1e-12;

fn solve_pairs(inst: &LpInstance, pairs: &[(usize, usize)], rule: PivotRule) -> LpSolution {
    let n = inst.values.len();
    let v = &inst.values;
    let f = &inst.masses;
    let cols = 2 * n;
    let rows = n + pairs.len();
    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows];
    for i in 0..n {
        a[i * cols + i] = 1.0;
        b[i] = 1.0;
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        // type i imitating type j: s_j − s_i + (v_i − v_j) x_j ≤ ε
        let r = n + k;
        let row = &mut a[r * cols..(r + 1) * cols];
        row[n + j] += 1.0;
        row[n + i] -= 1.0;
        row[j] += v[i] - v[j];
        b[r] = inst.eps;
    }
    let mut c = vec![0.0; cols];
    for i in 0..n {
        c[i] = f[i] * v[i];
        c[n + i] = -f[i];
    }
    let sol = maximize(&c, &a, &b, rule);
    let status = match sol.status {
        Status::Optimal => LpStatus::Optimal,
        Status::Infeasible => LpStatus::Infeasible,
        Status::Unbounded | Status::NumericalFailure => LpStatus::NumericalFailure,
    };
    let x: Vec<f64> = sol.x[..n].to_vec();
    let t: Vec<f64> = (0..n).map(|i| v[i] * x[i] - sol.x[n + i]).collect();
    LpSolution {
        value: sol.objective,
        x,
        t,
        status,
        pivots: sol.pivots,
        max_violation: 0.0,
    }
}

fn finish(inst: &LpInstance, mut out: LpSolution) -> LpSolution {
    out.max_violation = violation(inst, &out);
    let recomputed: f64 = inst.masses.iter().zip(&out.t).map(|(a, b)| a * b).sum();
    if out.max_violation > CHECK_TOL || (recomputed - out.value).abs() > CHECK_TOL {
        out.status = LpStatus::NumericalFailure;
    }
    out.value = recomputed;
    out
}

/// Largest violation of IR, ε-IC and the allocation bounds.
pub fn violation(inst: &LpInstance, sol: &LpSolution) -> f64 {
    let v = &inst.values;
    let n = v.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max(-sol.x[i]).max(sol.x[i] - 1.0);
        let own = v[i] * sol.x[i] - sol.t[i];
        worst = worst.max(-own);
        for j in 0..n {
            let other = v[i] * sol.x[j] - sol.t[j];
            worst = worst.max(other - inst.eps - own);
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub eps: f64,
    pub n: usize,
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
    pub slack: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Constructed mechanism ≤ LP optimum ≤ dual bound, each up to `2·v_bar·f̄/n`.
pub fn sandwich_check(dist: &ValueDistribution, eps: f64, n: usize) -> Result<SandwichReport> {
    let (_, r_star) = dist.optimal_price();
    let mut notes = Vec::new();
    let alpha = dist.envelope().map(|e| e.alpha).unwrap_or(2.0);
    let lower = if eps > 0.0 {
        match choose_mu(eps, alpha, dist).and_then(|c| build_delayed(dist, eps, c.mu)) {
            Ok((mech, _, _)) => expected_revenue(&mech, dist),
            Err(e) => {
                notes.push(format!("delayed mechanism unavailable ({e}); using r_star"));
                r_star
            }
        }
    } else {
        r_star
    };
    let lp = solve(&discretize(dist, n, eps)?);
    if lp.status != LpStatus::Optimal {
        notes.push(format!("lp status {:?}", lp.status));
    }
    let upper = if eps > 0.0 {
        match optimize_beta(dist, eps, alpha) {
            Ok((_, cert)) => cert.bound,
            Err(e) => {
                notes.push(format!("dual bound unavailable ({e})"));
                f64::INFINITY
            }
        }
    } else {
        r_star
    };
    let slack = 2.0 * dist.v_bar() * dist.pdf_max() / n as f64;
    let passed = lp.status == LpStatus::Optimal && lower - slack <= lp.value && lp.value <= upper + slack;
    Ok(SandwichReport {
        eps,
        n,
        lower,
        middle: lp.value,
        upper,
        slack,
        passed,
        notes,
    })
}
