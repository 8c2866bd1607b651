//! The randomized "delayed" mechanism.
//!
//! Buyers with values in a window `[p* − δ, p* + δ + μ]` are induced to shade
//! their report down by exactly `μ`; low types report `0` and high types
//! report `p* + δ`. The allocation solving the resulting incentive system is
//!
//! * `ε / (p* − δ − v)` below `p* − δ − μ`,
//! * `(ε/μ)·Z((v − p* + δ + μ)/μ)` up to `p* + δ`, where `Z = m + 1` is the
//!   uniform renewal function shifted by one (see [`crate::gamma`]),
//! * `1` above,
//!
//! and `δ` is pinned down by requiring the allocation to reach exactly 1 at
//! `p* + δ`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::distributions::ValueDistribution;
use crate::error::{domain, Result};
use crate::gamma::{gamma, renewal_plus_one, renewal_plus_one_integral};
use crate::mechanism::{expected_revenue, Mechanism, MechanismSpec, ReportingMap, Rule, Segment};
use crate::numeric::{bisect, simpson_pieces};

/// `(ε, μ, δ, p*)` plus the support end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayedParams {
    pub eps: f64,
    pub mu: f64,
    pub delta: f64,
    pub p_star: f64,
    pub v_bar: f64,
}

impl DelayedParams {
    /// Start of the constant-shading stretch, `p* − δ − μ`.
    pub fn ode_end(&self) -> f64 {
        self.p_star - self.delta - self.mu
    }

    /// `p* − δ`: lowest type that pays more than its own value times `x`.
    pub fn window_lo(&self) -> f64 {
        self.p_star - self.delta
    }

    /// `p* + δ`: lowest type served with probability one.
    pub fn window_hi(&self) -> f64 {
        self.p_star + self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let DelayedParams { eps, mu, delta, v_bar, .. } = *self;
        if !(eps > 0.0 && mu > E * eps) {
            return domain(format!("need eps > 0 and mu > e·eps (eps={eps}, mu={mu})"));
        }
        let hi = mu * mu / (4.0 * eps);
        let lo = (hi - mu).max(0.0);
        let slack = 1e-9 * hi.max(mu);
        if !(delta >= lo - slack && delta <= hi + slack) {
            return domain(format!("delta {delta} outside [{lo}, {hi}]"));
        }
        if self.ode_end() < 0.0 || self.window_hi() + mu > v_bar {
            return domain(format!(
                "window [{}, {}] escapes [0, {v_bar}]; use a smaller mu",
                self.ode_end(),
                self.window_hi() + mu
            ));
        }
        Ok(())
    }

    /// Declared best report at value `v`.
    pub fn report(&self, v: f64) -> f64 {
        if v < self.window_lo() {
            0.0
        } else if v <= self.window_hi() + self.mu {
            v - self.mu
        } else {
            self.window_hi()
        }
    }

    /// Inverse of the reporting map on `[0, p* + δ]`.
    pub fn inverse(&self, r: f64) -> f64 {
        if r <= self.ode_end() {
            self.window_lo()
        } else if r <= self.window_hi() {
            r + self.mu
        } else {
            self.v_bar
        }
    }

    fn shade(&self, v: f64) -> f64 {
        (v - self.ode_end()) / self.mu
    }

    /// Allocation probability.
    pub fn alloc(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        if v <= self.ode_end() {
            self.eps / (self.window_lo() - v)
        } else if v <= self.window_hi() {
            self.eps / self.mu * renewal_plus_one(self.shade(v))
        } else {
            1.0
        }
    }

    /// `∫_{p*−δ−μ}^{v} x` for `v` in the renewal stretch.
    fn alloc_integral(&self, v: f64) -> f64 {
        self.eps * renewal_plus_one_integral(self.shade(v))
    }

    /// Payment: the buyer's whole surplus below `p* − δ`, and IC-binding
    /// payments above.
    pub fn transfer(&self, v: f64) -> f64 {
        let lo = self.window_lo();
        let top = self.window_hi() + self.mu;
        if v < lo {
            v * self.alloc(v)
        } else if v <= top {
            v * self.alloc(v) - self.alloc_integral(v - self.mu)
        } else {
            top - self.alloc_integral(self.window_hi())
        }
    }

    fn knots(&self) -> Vec<f64> {
        let n = (2.0 * self.delta / self.mu + 1.0).floor() as usize;
        (0..=n + 1).map(|j| self.window_lo() + j as f64 * self.mu).collect()
    }
}

/// Segments of the delayed mechanism for given parameters.
pub(crate) fn segments(p: &DelayedParams) -> Result<Vec<Segment>> {
    p.validate()?;
    let q = *p;
    let a = p.ode_end();
    let lo = p.window_lo();
    let hi = p.window_hi();
    let top = hi + p.mu;
    let knots = p.knots();
    let inside = |l: f64, h: f64| knots.iter().copied().filter(|&k| k > l && k < h).collect::<Vec<_>>();
    let alloc = Rule::analytic(move |v| q.alloc(v));
    let transfer = Rule::analytic(move |v| q.transfer(v));
    let mut segs = vec![
        Segment::new(0.0, a, alloc.clone(), transfer.clone()),
        Segment::new(a, lo, alloc.clone(), transfer.clone()),
        Segment::new(lo, hi, alloc, transfer.clone()).with_knots(inside(lo, hi)),
        Segment::new(hi, top, Rule::Const(1.0), transfer).with_knots(inside(hi, top)),
        Segment::new(top, p.v_bar, Rule::Const(1.0), Rule::Const(p.transfer(p.v_bar))),
    ];
    segs.retain(|s| s.hi > s.lo);
    Ok(segs)
}

/// Solves `Γ(z) = (μ/(eε)) e^{−z}` for `z = 2δ/μ` and returns `δ`.
///
/// The equation is solved in the equivalent form `Z(z + 1) = μ/ε`, which is
/// monotone in `z` and free of the `e^{−z}` underflow.
pub fn solve_delta(mu: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && mu > E * eps) {
        return domain(format!("need mu > e·eps (mu={mu}, eps={eps})"));
    }
    let target = mu / eps;
    let z_hi = 2.0 * (mu / (2.0 * eps));
    let g = |z: f64| renewal_plus_one(z + 1.0) - target;
    let z = bisect(g, 0.0, z_hi, 1e-15 * z_hi).ok_or_else(|| crate::Error::Domain("root not bracketed".into()))?;
    let residual = gamma(z) - mu / (E * eps) * (-z).exp();
    if residual.abs() > 1e-12 {
        return domain(format!("root residual {residual:e} too large"));
    }
    let delta = z * mu / 2.0;
    let upper = mu * mu / (4.0 * eps);
    let lower = (upper - mu).max(0.0);
    if delta < lower - 1e-12 * upper || delta > upper + 1e-12 * upper {
        return domain(format!("delta {delta} outside bracket [{lower}, {upper}]"));
    }
    Ok(delta)
}

/// Builds the delayed mechanism for `(eps, mu)` around the distribution's
/// optimal price.
pub fn build_delayed(dist: &ValueDistribution, eps: f64, mu: f64) -> Result<(Mechanism, ReportingMap, DelayedParams)> {
    let delta = solve_delta(mu, eps)?;
    let (p_star, _) = dist.optimal_price();
    let params = DelayedParams {
        eps,
        mu,
        delta,
        p_star,
        v_bar: dist.v_bar(),
    };
    params.validate()?;
    let mech = Mechanism::from_spec(MechanismSpec::PerturbedDelayed(params))?;
    Ok((mech, ReportingMap::Delayed(params), params))
}

/// Integrates the allocation's differential system forward with RK4 and
/// reports the largest deviation from the closed form on `[0, p* + δ]`.
///
/// `steps_per_mu` sets the step length `μ / steps_per_mu` in the delayed
/// stretch, so that the lagged argument always falls on the step lattice or
/// half-way between two lattice points; history there is read off a cubic
/// Hermite interpolant.
pub fn dde_oracle(p: &DelayedParams, steps_per_mu: usize) -> f64 {
    let m = steps_per_mu.max(4);
    let a = p.ode_end();
    let lo = p.window_lo();
    let hi = p.window_hi();
    let mut worst: f64 = 0.0;
    let mut note = |v: f64, x: f64| worst = worst.max((x - p.alloc(v)).abs());

    // x' = x / (p* − δ − v) on [0, a]
    let f1 = |v: f64, x: f64| x / (lo - v);
    let mut v = 0.0;
    let mut x = p.eps / lo;
    note(v, x);
    let hmax = p.mu / m as f64;
    while v < a {
        let h = (0.01 * (lo - v)).min(hmax).min(a - v);
        let k1 = f1(v, x);
        let k2 = f1(v + 0.5 * h, x + 0.5 * h * k1);
        let k3 = f1(v + 0.5 * h, x + 0.5 * h * k2);
        let k4 = f1(v + h, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        v = if a - v - h <= 1e-15 * a.max(1.0) { a } else { v + h };
        note(v, x);
    }

    // Lattice from a with spacing μ/m; store value and one-sided slopes.
    let h = p.mu / m as f64;
    let mut xs = vec![x];
    let mut d_left = vec![x / p.mu];
    let mut d_right = vec![x / p.mu];
    // x' = x / μ on [a, lo]
    for k in 0..m {
        let v0 = a + k as f64 * h;
        let g = |x: f64| x / p.mu;
        let x0 = xs[k];
        let k1 = g(x0);
        let k2 = g(x0 + 0.5 * h * k1);
        let k3 = g(x0 + 0.5 * h * k2);
        let k4 = g(x0 + h * k3);
        let x1 = x0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        xs.push(x1);
        d_left.push(x1 / p.mu);
        d_right.push(x1 / p.mu);
        note(v0 + h, x1);
    }
    // At lo the slope switches to the delayed form.
    d_right[m] = (xs[m] - xs[0]) / p.mu;

    let hist = |s: f64, xs: &[f64], dr: &[f64], dl: &[f64]| -> f64 {
        let pos = (s - a) / h;
        let k = (pos.floor() as usize).min(xs.len() - 2);
        let th = pos - k as f64;
        if th <= 0.0 {
            return xs[k];
        }
        let (x0, x1) = (xs[k], xs[k + 1]);
        let (d0, d1) = (dr[k] * h, dl[k + 1] * h);
        let t2 = th * th;
        let t3 = t2 * th;
        (2.0 * t3 - 3.0 * t2 + 1.0) * x0 + (t3 - 2.0 * t2 + th) * d0 + (-2.0 * t3 + 3.0 * t2) * x1 + (t3 - t2) * d1
    };

    // x' = (x(v) − x(v − μ)) / μ on [lo, hi]
    let mut k = m;
    let mut v = lo;
    while v < hi - 1e-14 * hi.max(1.0) {
        let step = h.min(hi - v);
        let x0 = xs[k];
        let h0 = hist(v - p.mu, &xs, &d_right, &d_left);
        let hm = hist(v - p.mu + 0.5 * step, &xs, &d_right, &d_left);
        let h1 = hist(v - p.mu + step, &xs, &d_right, &d_left);
        let g = |x: f64, lag: f64| (x - lag) / p.mu;
        let k1 = g(x0, h0);
        let k2 = g(x0 + 0.5 * step * k1, hm);
        let k3 = g(x0 + 0.5 * step * k2, hm);
        let k4 = g(x0 + step * k3, h1);
        let x1 = x0 + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        v += step;
        xs.push(x1);
        let slope = g(x1, h1);
        d_left.push(slope);
        d_right.push(slope);
        note(v.min(hi), x1);
        k += 1;
    }
    worst
}

/// Revenue computed two ways: by direct quadrature of `t·f`, and through the
/// decomposition into a delayed-virtual-value integral below `p* + δ`, the
/// posted-price revenue at `p* + δ`, and the soft region above it.
pub fn delayed_revenue(dist: &ValueDistribution, mech: &Mechanism, p: &DelayedParams) -> (f64, f64) {
    let direct = expected_revenue(mech, dist);
    let a = p.ode_end();
    let top = p.window_hi();
    let weight = |v: f64| {
        let shift = if v >= a { dist.sf(v + p.mu) } else { 0.0 };
        p.alloc(v) * (v * dist.pdf(v) - shift)
    };
    let mut breaks = p.knots();
    breaks.push(a);
    for b in dist.breakpoints() {
        breaks.push(b);
        breaks.push(b - p.mu);
    }
    let body = simpson_pieces(&weight, 0.0, top, &breaks, 1e-11);
    let formula = body + dist.revenue(top) + dist.integrate_sf(top, top + p.mu, 1e-13);
    (direct, formula)
}

/// Outcome of [`choose_mu`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuChoice {
    pub mu: f64,
    pub k: f64,
    pub delta: f64,
    pub gain: f64,
}

/// Scans `K ∈ {1, 1/2, 1/4, …}` for `μ = K ε^{α/(2α−1)}` and returns the
/// largest `K` that keeps the window inside the support, satisfies the
/// positivity condition `F̄(p*+δ+μ)·K > κ_U (K²/4)^α`, and yields a positive
/// measured gain.
pub fn choose_mu(eps: f64, alpha: f64, dist: &ValueDistribution) -> Result<MuChoice> {
    let env = match dist.envelope() {
        Some(e) => e,
        None => return domain("choose_mu needs envelope parameters on the distribution"),
    };
    let rate = alpha / (2.0 * alpha - 1.0);
    let (p_star, r_star) = dist.optimal_price();
    let mut k = 1.0;
    for _ in 0..40 {
        let mu = k * eps.powf(rate);
        if mu <= E * eps {
            break;
        }
        if let Ok(delta) = solve_delta(mu, eps) {
            let inside = p_star - delta - mu >= 0.0 && p_star + delta + mu <= dist.v_bar();
            let positive = inside && dist.sf(p_star + delta + mu) * k > env.kappa_u * (k * k / 4.0).powf(alpha);
            if positive {
                if let Ok((mech, _, _)) = build_delayed(dist, eps, mu) {
                    let gain = expected_revenue(&mech, dist) - r_star;
                    if gain > 0.0 {
                        return Ok(MuChoice { mu, k, delta, gain });
                    }
                }
            }
        }
        k *= 0.5;
    }
    domain(format!("no admissible mu for eps = {eps}"))
}
