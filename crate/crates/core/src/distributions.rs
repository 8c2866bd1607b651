//! Buyer value distributions supported on `[0, v_bar]`.
//!
//! Besides CDF and density evaluation this module provides the revenue curve
//! `R(v) = v (1 - F(v))`, the virtual value, the optimal posted price and the
//! local power-envelope check used to classify how flat `R` is at its peak.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{bisect, golden_max, simpson_pieces};

/// Resolution used for validation grids and the price scan.
pub const GRID_POINTS: usize = 10_000;

/// Serializable description of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistConfig {
    Uniform {
        v_bar: f64,
    },
    ExponentialTruncated {
        v_bar: f64,
        rate: f64,
    },
    EnvelopeDesigned {
        v_bar: f64,
        alpha: f64,
        p_star: f64,
        r_star: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
    /// Density sampled at evenly spaced nodes `0, h, …, v_bar`, interpolated
    /// linearly and renormalized.
    UserSupplied {
        v_bar: f64,
        pdf: Vec<f64>,
    },
}

/// Two-sided power-law control of `R` around its maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub alpha: f64,
    pub kappa_l: f64,
    pub kappa_u: f64,
    pub ell: f64,
}

/// Which inequality [`ValueDistribution::envelope_check`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeForm {
    /// `kl·α|d|^α ≤ (p* − v) R'(v) ≤ ku·α|d|^α`
    Derivative,
    /// `kl·|d|^α ≤ R(p*) − R(v) ≤ ku·|d|^α`
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub passed: bool,
    pub worst_margin: f64,
    pub worst_value: f64,
    pub failing_side: Option<EnvelopeSide>,
}

#[derive(Debug, Clone)]
struct Designed {
    alpha: f64,
    p_star: f64,
    r_star: f64,
    kappa: f64,
    ell: f64,
    /// Survival function is `1 + left_b·v` left of the core.
    left_b: f64,
    /// Revenue at both core edges.
    edge_r: f64,
}

#[derive(Debug, Clone)]
struct Tabulated {
    h: f64,
    pdf: Vec<f64>,
    cdf_nodes: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Shape {
    Uniform,
    Exponential { rate: f64, norm: f64 },
    Designed(Designed),
    Tabulated(Tabulated),
}

/// A validated value distribution. Immutable once built.
#[derive(Debug, Clone)]
pub struct ValueDistribution {
    v_bar: f64,
    shape: Shape,
    envelope: Option<Envelope>,
    config: DistConfig,
    optimum: OnceLock<(f64, f64)>,
    pdf_max: OnceLock<f64>,
}

impl ValueDistribution {
    pub fn uniform(v_bar: f64) -> Result<Self> {
        Self::from_config(&DistConfig::Uniform { v_bar })
    }

    pub fn truncated_exponential(rate: f64, v_bar: f64) -> Result<Self> {
        Self::from_config(&DistConfig::ExponentialTruncated { v_bar, rate })
    }

    /// Distribution whose revenue curve is exactly `r_star − κ|v − p_star|^α`
    /// near the peak. When `kappa` is `None` the largest admissible value is
    /// used.
    pub fn envelope_designed(
        alpha: f64,
        p_star: f64,
        r_star: f64,
        v_bar: f64,
        kappa: Option<f64>,
    ) -> Result<Self> {
        Self::from_config(&DistConfig::EnvelopeDesigned {
            v_bar,
            alpha,
            p_star,
            r_star,
            kappa,
        })
    }

    pub fn user_supplied(v_bar: f64, pdf: Vec<f64>) -> Result<Self> {
        Self::from_config(&DistConfig::UserSupplied { v_bar, pdf })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: DistConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn from_config(cfg: &DistConfig) -> Result<Self> {
        let v_bar = match cfg {
            DistConfig::Uniform { v_bar }
            | DistConfig::ExponentialTruncated { v_bar, .. }
            | DistConfig::EnvelopeDesigned { v_bar, .. }
            | DistConfig::UserSupplied { v_bar, .. } => *v_bar,
        };
        if !(v_bar > 0.0 && v_bar.is_finite()) {
            return Err(Error::Config(format!("v_bar must be positive, got {v_bar}")));
        }
        let (shape, envelope) = match cfg {
            DistConfig::Uniform { .. } => (
                Shape::Uniform,
                Some(Envelope {
                    alpha: 2.0,
                    kappa_l: 1.0 / v_bar,
                    kappa_u: 1.0 / v_bar,
                    ell: 0.45 * v_bar,
                }),
            ),
            DistConfig::ExponentialTruncated { rate, .. } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Config(format!("rate must be positive, got {rate}")));
                }
                let norm = -(-rate * v_bar).exp_m1();
                (Shape::Exponential { rate: *rate, norm }, None)
            }
            DistConfig::EnvelopeDesigned {
                alpha,
                p_star,
                r_star,
                kappa,
                ..
            } => {
                let d = design(*alpha, *p_star, *r_star, v_bar, *kappa)?;
                let env = Envelope {
                    alpha: d.alpha,
                    kappa_l: d.kappa,
                    kappa_u: d.kappa,
                    ell: d.ell,
                };
                (Shape::Designed(d), Some(env))
            }
            DistConfig::UserSupplied { pdf, .. } => (Shape::Tabulated(tabulate(v_bar, pdf)?), None),
        };
        let dist = ValueDistribution {
            v_bar,
            shape,
            envelope,
            config: cfg.clone(),
            optimum: OnceLock::new(),
            pdf_max: OnceLock::new(),
        };
        dist.validate()?;
        if let (Shape::Designed(d), Some(env)) = (&dist.shape, envelope) {
            let rep = dist.envelope_check(env.alpha, env.kappa_l, env.kappa_u, env.ell, EnvelopeForm::Derivative)?;
            if !rep.passed {
                return Err(Error::Construction {
                    msg: format!("designed curve violates its own envelope (margin {:e})", rep.worst_margin),
                    lo: d.p_star - d.ell,
                    hi: d.p_star + d.ell,
                });
            }
        }
        Ok(dist)
    }

    /// Attaches (or replaces) envelope parameters after checking them.
    pub fn with_envelope(mut self, env: Envelope) -> Result<Self> {
        if !(env.alpha > 1.0 && env.kappa_l > 0.0 && env.kappa_l <= env.kappa_u && env.ell > 0.0) {
            return domain(format!("invalid envelope {env:?}"));
        }
        let (p, _) = self.optimal_price();
        if !(p - env.ell > 0.0 && p + env.ell < self.v_bar) {
            return domain("envelope neighbourhood escapes the support");
        }
        self.envelope = Some(env);
        Ok(self)
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }

    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }

    pub fn config(&self) -> &DistConfig {
        &self.config
    }

    pub fn kind(&self) -> &'static str {
        match self.shape {
            Shape::Uniform => "uniform",
            Shape::Exponential { .. } => "exponential-truncated",
            Shape::Designed(_) => "envelope-designed",
            Shape::Tabulated(_) => "user-supplied",
        }
    }

    /// Survival function `1 − F(v)`.
    pub fn sf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 1.0;
        }
        if v >= self.v_bar {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform => 1.0 - v / self.v_bar,
            Shape::Exponential { rate, norm } => {
                ((-rate * v).exp() - (-rate * self.v_bar).exp()) / norm
            }
            Shape::Designed(d) => {
                if v <= d.p_star - d.ell {
                    1.0 + d.left_b * v
                } else {
                    d.revenue(v, self.v_bar) / v
                }
            }
            Shape::Tabulated(t) => 1.0 - t.cdf(v),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        (1.0 - self.sf(v)).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if v < 0.0 || v > self.v_bar {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform => 1.0 / self.v_bar,
            Shape::Exponential { rate, norm } => rate * (-rate * v).exp() / norm,
            Shape::Designed(d) => {
                if v <= d.p_star - d.ell {
                    -d.left_b
                } else {
                    let r = d.revenue(v, self.v_bar);
                    ((r / v - d.revenue_slope(v, self.v_bar)) / v).max(0.0)
                }
            }
            Shape::Tabulated(t) => t.pdf(v),
        }
    }

    /// `R(v) = v·(1 − F(v))`.
    pub fn revenue(&self, v: f64) -> f64 {
        match &self.shape {
            Shape::Designed(d) if v > 0.0 && v < self.v_bar => d.revenue(v, self.v_bar),
            _ => v * self.sf(v),
        }
    }

    /// `R'(v) = (1 − F(v)) − v f(v)`, analytic where the shape allows it.
    pub fn revenue_slope(&self, v: f64) -> f64 {
        match &self.shape {
            Shape::Uniform => 1.0 - 2.0 * v / self.v_bar,
            Shape::Designed(d) => d.revenue_slope(v, self.v_bar),
            _ => self.sf(v) - v * self.pdf(v),
        }
    }

    /// Revenue and its derivative at a point of the support.
    pub fn revenue_curve(&self, v: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.v_bar).contains(&v) {
            return domain(format!("v = {v} outside [0, {}]", self.v_bar));
        }
        Ok((self.revenue(v), self.revenue_slope(v)))
    }

    /// `ψ(v) = v − (1 − F(v)) / f(v)`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        let f = self.pdf(v);
        if !(f > 0.0) {
            return Err(Error::Singularity(format!("pdf vanishes at v = {v}")));
        }
        Ok(v - self.sf(v) / f)
    }

    /// Smallest global maximizer of `R` and the maximal revenue. Cached.
    pub fn optimal_price(&self) -> (f64, f64) {
        *self.optimum.get_or_init(|| self.locate_optimum())
    }

    fn locate_optimum(&self) -> (f64, f64) {
        let n = GRID_POINTS;
        let h = self.v_bar / n as f64;
        let mut best = 0usize;
        let mut best_r = self.revenue(0.0);
        for i in 1..=n {
            let r = self.revenue(i as f64 * h);
            if r > best_r {
                best_r = r;
                best = i;
            }
        }
        let lo = if best == 0 { 0.0 } else { (best - 1) as f64 * h };
        let hi = if best == n { self.v_bar } else { (best + 1) as f64 * h };
        let mut cand = (best as f64 * h, best_r);
        if best == n {
            cand.0 = self.v_bar;
        }
        let (slo, shi) = (self.revenue_slope(lo), self.revenue_slope(hi));
        let refined = if slo > 0.0 && shi < 0.0 {
            bisect(|v| self.revenue_slope(v), lo, hi, 1e-15 * self.v_bar).map(|p| (p, self.revenue(p)))
        } else {
            Some(golden_max(|v| self.revenue(v), lo, hi, 1e-10 * self.v_bar))
        };
        if let Some((p, r)) = refined {
            if r >= cand.1 {
                cand = (p, r);
            }
        }
        cand
    }

    /// Grid maximum of the density (the `f̄` constant).
    pub fn pdf_max(&self) -> f64 {
        *self.pdf_max.get_or_init(|| {
            let n = GRID_POINTS;
            let h = self.v_bar / n as f64;
            let grid = (0..=n).map(|i| i as f64 * h);
            grid.chain(self.breakpoints())
                .map(|v| self.pdf(v))
                .fold(0.0, f64::max)
        })
    }

    /// Points where the density may be non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Designed(d) => vec![d.p_star - d.ell, d.p_star, d.p_star + d.ell],
            Shape::Tabulated(t) => (1..t.pdf.len() - 1).map(|i| i as f64 * t.h).collect(),
            _ => Vec::new(),
        }
    }

    /// `∫_a^b (1 − F(v)) dv` to absolute tolerance `tol`.
    pub fn integrate_sf(&self, a: f64, b: f64, tol: f64) -> f64 {
        let b = b.min(self.v_bar);
        if !(b > a) {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform => {
                let g = |v: f64| v - v * v / (2.0 * self.v_bar);
                g(b) - g(a)
            }
            _ => simpson_pieces(&|v| self.sf(v), a, b, &self.breakpoints(), tol),
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String, lo: f64, hi: f64| Err(Error::Construction { msg, lo, hi });
        if self.cdf(0.0).abs() > 1e-9 {
            return err(format!("cdf(0) = {}", self.cdf(0.0)), 0.0, 0.0);
        }
        if (self.cdf(self.v_bar) - 1.0).abs() > 1e-9 {
            return err("cdf(v_bar) != 1".into(), self.v_bar, self.v_bar);
        }
        let n = GRID_POINTS;
        let h = self.v_bar / n as f64;
        let mut prev = self.cdf(0.0);
        for i in 0..=n {
            let v = i as f64 * h;
            let f = self.pdf(v);
            if !(f >= 0.0) || !f.is_finite() {
                return err(format!("pdf({v}) = {f}"), v, v);
            }
            let c = self.cdf(v);
            if c < prev - 1e-12 {
                return err("cdf decreases".into(), v - h, v);
            }
            prev = c;
        }
        let mass = simpson_pieces(&|v| self.pdf(v), 0.0, self.v_bar, &self.breakpoints(), 1e-10);
        if (mass - 1.0).abs() > 1e-6 {
            return err(format!("density integrates to {mass}"), 0.0, self.v_bar);
        }
        Ok(())
    }

    /// Checks the local power envelope on a 10³-point grid of the
    /// neighbourhood `(p* − ell, p* + ell)`.
    pub fn envelope_check(
        &self,
        alpha: f64,
        kappa_l: f64,
        kappa_u: f64,
        ell: f64,
        form: EnvelopeForm,
    ) -> Result<EnvelopeReport> {
        let (p, r) = self.optimal_price();
        if !(ell > 0.0 && p - ell > 0.0 && p + ell < self.v_bar) {
            return domain(format!(
                "neighbourhood ({}, {}) not inside (0, {})",
                p - ell,
                p + ell,
                self.v_bar
            ));
        }
        const N: usize = 1000;
        const TOL: f64 = 1e-12;
        let step = 2.0 * ell / N as f64;
        let mut worst = f64::INFINITY;
        let mut worst_v = p;
        let mut side = EnvelopeSide::Lower;
        for i in 0..N {
            let v = p - ell + (i as f64 + 0.5) * step;
            let d = (v - p).abs();
            let (g, scale) = match form {
                EnvelopeForm::Derivative => ((p - v) * self.revenue_slope(v), alpha * d.powf(alpha)),
                EnvelopeForm::Value => (r - self.revenue(v), d.powf(alpha)),
            };
            let lower = g - kappa_l * scale;
            let upper = kappa_u * scale - g;
            if lower < worst {
                worst = lower;
                worst_v = v;
                side = EnvelopeSide::Lower;
            }
            if upper < worst {
                worst = upper;
                worst_v = v;
                side = EnvelopeSide::Upper;
            }
        }
        let passed = worst >= -TOL;
        Ok(EnvelopeReport {
            passed,
            worst_margin: worst,
            worst_value: worst_v,
            failing_side: if passed { None } else { Some(side) },
        })
    }
}

impl Designed {
    fn revenue(&self, v: f64, v_bar: f64) -> f64 {
        let a = self.p_star - self.ell;
        let c = self.p_star + self.ell;
        if v <= a {
            v * (1.0 + self.left_b * v)
        } else if v <= c {
            self.r_star - self.kappa * (v - self.p_star).abs().powf(self.alpha)
        } else {
            self.edge_r * (v_bar - v) / (v_bar - c)
        }
    }

    fn revenue_slope(&self, v: f64, v_bar: f64) -> f64 {
        let a = self.p_star - self.ell;
        let c = self.p_star + self.ell;
        if v <= a {
            1.0 + 2.0 * self.left_b * v
        } else if v <= c {
            let d = v - self.p_star;
            -self.kappa * self.alpha * d.abs().powf(self.alpha - 1.0) * d.signum()
        } else {
            -self.edge_r / (v_bar - c)
        }
    }
}

/// Builds the revenue curve: a power-law core around `p_star`, a quadratic
/// piece on the left (so the survival function is linear and starts at 1) and
/// a straight segment down to `R(v_bar) = 0` on the right.
fn design(alpha: f64, p_star: f64, r_star: f64, v_bar: f64, kappa: Option<f64>) -> Result<Designed> {
    let bad = |msg: &str| Error::Construction {
        msg: msg.to_string(),
        lo: 0.0,
        hi: v_bar,
    };
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(bad("alpha must exceed 1"));
    }
    if !(p_star > 0.0 && p_star < v_bar) {
        return Err(bad("p_star must lie inside (0, v_bar)"));
    }
    if !(r_star > 0.0 && r_star < p_star) {
        return Err(bad("need 0 < r_star < p_star since the survival function is at most 1"));
    }
    if let Some(k) = kappa {
        if !(k > 0.0) {
            return Err(bad("kappa must be positive"));
        }
    }
    let half = p_star.min(v_bar - p_star);
    for frac in [0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.025] {
        let ell = frac * half;
        let a = p_star - ell;
        if 2.0 * r_star <= a {
            continue;
        }
        let la = ell.powf(alpha);
        let cap_left = (2.0 * r_star / a - 1.0) / (2.0 * la / a + alpha * ell.powf(alpha - 1.0));
        let cap_right = r_star / (alpha * ell.powf(alpha - 1.0) * (v_bar - p_star - ell) + la);
        let cap = cap_left.min(cap_right);
        let floor = (r_star - a) / la;
        let k = kappa.unwrap_or(cap);
        if k > cap * (1.0 + 1e-12) || k < floor || r_star - k * la <= 0.0 {
            continue;
        }
        let edge_r = r_star - k * la;
        return Ok(Designed {
            alpha,
            p_star,
            r_star,
            kappa: k,
            ell,
            left_b: (edge_r - a) / (a * a),
            edge_r,
        });
    }
    Err(bad("no neighbourhood radius yields a concave revenue curve for these parameters"))
}

impl Tabulated {
    fn pdf(&self, v: f64) -> f64 {
        let n = self.pdf.len() - 1;
        let i = ((v / self.h) as usize).min(n - 1);
        let u = (v - i as f64 * self.h) / self.h;
        self.pdf[i] + (self.pdf[i + 1] - self.pdf[i]) * u
    }

    fn cdf(&self, v: f64) -> f64 {
        let n = self.pdf.len() - 1;
        let i = ((v / self.h) as usize).min(n - 1);
        let u = v - i as f64 * self.h;
        let slope = (self.pdf[i + 1] - self.pdf[i]) / self.h;
        self.cdf_nodes[i] + self.pdf[i] * u + 0.5 * slope * u * u
    }
}

fn tabulate(v_bar: f64, raw: &[f64]) -> Result<Tabulated> {
    if raw.len() < 2 {
        return Err(Error::Config("user-supplied pdf needs at least two nodes".into()));
    }
    if raw.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Config("user-supplied pdf must be finite and nonnegative".into()));
    }
    let n = raw.len() - 1;
    let h = v_bar / n as f64;
    let mass: f64 = raw.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    if !(mass > 0.0) {
        return Err(Error::Config("user-supplied pdf has zero mass".into()));
    }
    let pdf: Vec<f64> = raw.iter().map(|p| p / mass).collect();
    let mut cdf_nodes = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cdf_nodes.push(0.0);
    for w in pdf.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        cdf_nodes.push(acc);
    }
    Ok(Tabulated { h, pdf, cdf_nodes })
}
