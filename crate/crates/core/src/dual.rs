//! Certified upper bounds on the optimal revenue under ε-IC.
//!
//! Only IR for low types and the ε-IC constraints along a single reporting
//! path are kept. The path inverse `w` is piecewise linear with a kink at the
//! monopoly price `p*`: slope `m > 1` above it and `2 − m` below it, shifted
//! up by `ε^{1−β}`. Any feasible dual of the relaxed problem bounds the
//! optimum; the multiplier of the IC constraints solves
//! `λ(v) = f(v) + w'(v) λ(w(v))` and is obtained by iterating `w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ValueDistribution;
use crate::error::{domain, Result};
use crate::numeric::{simpson_pieces, CompensatedSum};

const MAX_STEPS: usize = 5_000_000;

/// Geometry of the path and the resulting bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathCertificate {
    pub eps: f64,
    pub beta: f64,
    pub p_star: f64,
    pub v_bar: f64,
    /// `ν₀ = v_bar − ε^β`, the preimage of `v_bar`.
    pub nu0: f64,
    pub slope_m: f64,
    /// Vertical offset `ε^{1−β}` of `w` at `p*`.
    pub shift: f64,
    /// `w(0)`.
    pub mu: f64,
    /// Descending `ν₀, ν₁, …, ν_K` with `ν_k = w(ν_{k+1})`.
    pub thresholds: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub bound: f64,
}

impl PathCertificate {
    pub fn slope(&self, v: f64) -> f64 {
        if v >= self.p_star {
            self.slope_m
        } else {
            2.0 - self.slope_m
        }
    }

    /// The path inverse `w`, extended linearly outside `[0, ν₀]`.
    pub fn w(&self, v: f64) -> f64 {
        self.p_star + self.shift + self.slope(v) * (v - self.p_star)
    }

    pub fn w_inv(&self, y: f64) -> f64 {
        let d = y - self.p_star - self.shift;
        if d >= 0.0 {
            self.p_star + d / self.slope_m
        } else {
            self.p_star + d / (2.0 - self.slope_m)
        }
    }

    /// Index `k` of the step `[ν_k, ν_{k−1}]` containing `v` (`ν_{−1} = v_bar`).
    pub fn step_of(&self, v: f64) -> usize {
        self.thresholds.partition_point(|&nu| nu > v)
    }

    /// `λ(v) = Σ_j f(w^j(v)) Π_{i<j} w'(w^i(v))` for `v ≥ μ`.
    pub fn lambda(&self, dist: &ValueDistribution, v: f64) -> Result<f64> {
        if v < self.mu * (1.0 - 1e-15) || v > self.v_bar {
            return domain(format!("lambda needs v in [{}, {}], got {v}", self.mu, self.v_bar));
        }
        Ok(self.lambda_unchecked(dist, v))
    }

    fn lambda_unchecked(&self, dist: &ValueDistribution, v: f64) -> f64 {
        let steps = self.step_of(v);
        let mut acc = 0.0;
        let mut prod = 1.0;
        let mut u = v;
        for j in 0..=steps {
            acc += prod * dist.pdf(u);
            if j < steps {
                prod *= self.slope(u);
                u = self.w(u);
            }
        }
        acc
    }

    /// `Σ_{j=0}^{k} F(w^j(v))`, an antiderivative of `λ` on step `k`.
    fn cumulative(&self, dist: &ValueDistribution, k: usize, v: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        let mut u = v;
        for j in 0..=k {
            acc.add(dist.cdf(u));
            if j < k {
                u = self.w(u);
            }
        }
        acc.value()
    }

    /// Integrand of the second dual term before taking the positive part.
    pub fn dual_density(&self, dist: &ValueDistribution, v: f64) -> f64 {
        let own = v * dist.pdf(v);
        if v <= self.nu0 {
            let wv = self.w(v).min(self.v_bar);
            own - self.slope(v) * (wv - v) * self.lambda_unchecked(dist, wv)
        } else {
            own
        }
    }

    /// Points in `[0, v_bar]` where the dual integrand may be non-smooth.
    fn breakpoints(&self, dist: &ValueDistribution) -> Vec<f64> {
        let mut pts: Vec<f64> = self.thresholds.iter().copied().filter(|&x| x >= 0.0).collect();
        let mut seeds = vec![self.p_star];
        seeds.extend(dist.breakpoints());
        for s in seeds {
            let mut q = s;
            let mut n = 0;
            while q >= 0.0 && q <= self.v_bar && n < MAX_STEPS {
                pts.push(q);
                let next = self.w_inv(q);
                if next >= q {
                    break;
                }
                q = next;
                n += 1;
            }
        }
        pts
    }
}

/// Builds `w` and the threshold ladder for `(eps, beta)`.
pub fn build_path(dist: &ValueDistribution, eps: f64, beta: f64) -> Result<PathCertificate> {
    if !(beta > 0.0 && beta < 0.5) {
        return domain(format!("beta must lie in (0, 1/2), got {beta}"));
    }
    if !(eps > 0.0) {
        return domain("eps must be positive");
    }
    let v_bar = dist.v_bar();
    let (p_star, _) = dist.optimal_price();
    let room = v_bar - p_star;
    let lead = eps.powf(beta);
    let shift = eps.powf(1.0 - beta);
    if !(lead < room && shift < room) {
        return domain(format!("path escapes the support at eps = {eps}, beta = {beta}"));
    }
    let nu0 = v_bar - lead;
    let slope_m = (v_bar - (p_star + shift)) / (nu0 - p_star);
    if !(slope_m > 1.0 && slope_m < 2.0) {
        return domain(format!("path slope {slope_m} outside (1, 2) at eps = {eps}, beta = {beta}"));
    }
    let mut cert = PathCertificate {
        eps,
        beta,
        p_star,
        v_bar,
        nu0,
        slope_m,
        shift,
        mu: 0.0,
        thresholds: vec![nu0],
        k: 0,
        phi1: 0.0,
        phi2: 0.0,
        bound: 0.0,
    };
    cert.mu = cert.w(0.0);
    while *cert.thresholds.last().unwrap() > cert.mu {
        if cert.thresholds.len() > MAX_STEPS {
            return domain("threshold ladder does not terminate");
        }
        let next = cert.w_inv(*cert.thresholds.last().unwrap());
        cert.thresholds.push(next);
    }
    cert.k = cert.thresholds.len() - 1;
    Ok(cert)
}

/// `λ^IC(v)` for a certificate.
pub fn lambda_ic(cert: &PathCertificate, dist: &ValueDistribution, v: f64) -> Result<f64> {
    cert.lambda(dist, v)
}

/// Evaluates both dual terms and the resulting bound.
///
/// The first term `ε ∫_μ^{v_bar} λ` is summed exactly from the antiderivative
/// on each step; the second is integrated by adaptive Simpson between all
/// breakpoints of the integrand.
pub fn dual_value(dist: &ValueDistribution, eps: f64, beta: f64) -> Result<PathCertificate> {
    let mut cert = build_path(dist, eps, beta)?;
    let mut phi1 = CompensatedSum::new();
    for k in 0..=cert.k {
        let upper = if k == 0 { cert.v_bar } else { cert.thresholds[k - 1] };
        let lower = cert.thresholds[k].max(cert.mu);
        if upper > lower {
            phi1.add(cert.cumulative(dist, k, upper) - cert.cumulative(dist, k, lower));
        }
    }
    cert.phi1 = eps * phi1.value();
    let breaks = cert.breakpoints(dist);
    let c = &cert;
    let integrand = |v: f64| c.dual_density(dist, v).max(0.0);
    cert.phi2 = simpson_pieces(&integrand, 0.0, cert.v_bar, &breaks, 1e-10);
    cert.bound = cert.phi1 + cert.phi2;
    Ok(cert)
}

/// Seed exponent `(α − 1)/(2α − 1)` balancing the two dual terms.
pub fn seed_beta(alpha: f64) -> f64 {
    (alpha - 1.0) / (2.0 * alpha - 1.0)
}

/// Minimizes the bound over 21 exponents spaced 0.01 around the seed.
pub fn optimize_beta(dist: &ValueDistribution, eps: f64, alpha: f64) -> Result<(f64, PathCertificate)> {
    let seed = seed_beta(alpha);
    let grid: Vec<f64> = (0..21)
        .map(|i| seed + (i as f64 - 10.0) * 0.01)
        .filter(|&b| b > 0.0 && b < 0.5)
        .collect();
    let certs: Vec<PathCertificate> = grid
        .par_iter()
        .filter_map(|&b| dual_value(dist, eps, b).ok())
        .collect();
    let best = certs
        .into_iter()
        .reduce(|a, b| if b.bound < a.bound { b } else { a });
    match best {
        Some(c) => Ok((c.beta, c)),
        None => domain(format!("no admissible beta near {seed} at eps = {eps}")),
    }
}
