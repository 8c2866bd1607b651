//! Deterministic mechanisms with a hard floor `p` and a soft floor `s`:
//! no sale below `p`, pay-your-bid on `[p, s)`, a flat price `s` above.

use serde::Serialize;

use crate::distributions::{ValueDistribution, GRID_POINTS};
use crate::error::{domain, Result};
use crate::mechanism::{Mechanism, MechanismSpec, Rule, Segment};
use crate::numeric::golden_max;

pub(crate) fn floor_segments(hard: f64, soft: f64, v_bar: f64) -> Result<Vec<Segment>> {
    if !(0.0 <= hard && hard <= soft && soft <= v_bar) {
        return domain(format!("need 0 ≤ hard ≤ soft ≤ v_bar, got ({hard}, {soft}, {v_bar})"));
    }
    let mut segs = Vec::with_capacity(3);
    if hard > 0.0 {
        segs.push(Segment::new(0.0, hard, Rule::Const(0.0), Rule::Const(0.0)));
    }
    if soft > hard {
        segs.push(Segment::new(
            hard,
            soft,
            Rule::Const(1.0),
            Rule::Affine {
                intercept: 0.0,
                slope: 1.0,
            },
        ));
    }
    segs.push(Segment::new(soft, v_bar, Rule::Const(1.0), Rule::Const(soft)));
    Ok(segs)
}

/// Hard/soft floor mechanism; collapses to a posted price when `p == s`.
pub fn build_hard_soft(p: f64, s: f64, v_bar: f64) -> Result<Mechanism> {
    let spec = if p == s {
        MechanismSpec::PostedPrice { v_bar, price: p }
    } else {
        MechanismSpec::HardSoftFloor { v_bar, hard: p, soft: s }
    };
    Mechanism::from_spec(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetRevenue {
    pub value: f64,
    /// Set when `r + eps` exceeded `v_bar` and the integral was truncated.
    pub clamped: bool,
}

/// Revenue of the floor mechanism `(r, r + eps)`: `r F̄(r) + ∫_r^{r+ε} F̄`.
pub fn det_revenue(dist: &ValueDistribution, r: f64, eps: f64) -> Result<DetRevenue> {
    if !(0.0..=dist.v_bar()).contains(&r) || !(eps >= 0.0) {
        return domain(format!("det_revenue needs r in [0, v_bar] and eps ≥ 0, got r={r}, eps={eps}"));
    }
    let top = r + eps;
    let clamped = top > dist.v_bar();
    let value = dist.revenue(r) + dist.integrate_sf(r, top.min(dist.v_bar()), 1e-14);
    Ok(DetRevenue { value, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetOptimum {
    pub reserve: f64,
    pub value: f64,
    pub gain: f64,
}

/// Best hard floor for the pair `(r, r + eps)`, by grid scan and golden-section.
pub fn optimal_det(dist: &ValueDistribution, eps: f64) -> Result<DetOptimum> {
    if !(eps >= 0.0) {
        return domain("eps must be nonnegative");
    }
    let v_bar = dist.v_bar();
    let obj = |r: f64| det_revenue(dist, r.clamp(0.0, v_bar), eps).map(|d| d.value).unwrap_or(f64::NEG_INFINITY);
    let n = GRID_POINTS;
    let h = v_bar / n as f64;
    let mut best = 0usize;
    let mut best_v = obj(0.0);
    for i in 1..=n {
        let val = obj(i as f64 * h);
        if val > best_v {
            best_v = val;
            best = i;
        }
    }
    let lo = best.saturating_sub(1) as f64 * h;
    let hi = ((best + 1).min(n) as f64 * h).min(v_bar);
    let (mut reserve, mut value) = (best as f64 * h, best_v);
    let (r, v) = golden_max(obj, lo, hi, 1e-10 * v_bar);
    if v > value {
        reserve = r;
        value = v;
    }
    let (_, r_star) = dist.optimal_price();
    Ok(DetOptimum {
        reserve,
        value,
        gain: value - r_star,
    })
}
