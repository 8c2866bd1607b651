//! The special function `Γ(t) = Σ_{j=0}^{⌊t⌋+1} (−1)^j e^{−j} (t+1−j)^j / j!`
//! and its link to the renewal function of a process with uniform[0, 1]
//! inter-arrival times: `m(t+1) = e^{t+1} Γ(t) − 1`.
//!
//! The alternating series loses every significant digit once `t` passes
//! roughly 25 (its largest term grows like `e^{0.28 t}` while the sum decays
//! like `t e^{−t}`), so beyond a small cutoff `Γ` is evaluated through the
//! renewal side, which satisfies `Z'(s) = Z(s) − Z(s−1)` for `Z = m + 1` and
//! is tabulated per unit interval as a power series.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::numeric::CompensatedSum;

/// Largest `t` for which the alternating series is summed directly.
pub const SERIES_CUTOFF: f64 = 8.0;

const DEGREE: usize = 32;
/// Past this many unit intervals `Z(s)` equals its linear asymptote
/// `2s + 2/3` to machine precision.
const INTERVALS: usize = 40;

struct Table {
    coeffs: Vec<[f64; DEGREE]>,
    /// `∫_0^n Z` at each integer `n`.
    integrals: Vec<f64>,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut coeffs = Vec::with_capacity(INTERVALS);
        let mut first = [0.0; DEGREE];
        let mut fact = 1.0;
        for (k, c) in first.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *c = 1.0 / fact;
        }
        coeffs.push(first);
        for n in 1..INTERVALS {
            let prev = coeffs[n - 1];
            let mut a = [0.0; DEGREE];
            a[0] = poly_sum(&prev);
            for k in 0..DEGREE - 1 {
                a[k + 1] = (a[k] - prev[k]) / (k + 1) as f64;
            }
            coeffs.push(a);
        }
        let mut integrals = Vec::with_capacity(INTERVALS + 1);
        integrals.push(0.0);
        for c in &coeffs {
            let last = *integrals.last().unwrap();
            integrals.push(last + poly_integral(c, 1.0));
        }
        Table { coeffs, integrals }
    })
}

fn poly_sum(c: &[f64; DEGREE]) -> f64 {
    let mut s = CompensatedSum::new();
    for &x in c {
        s.add(x);
    }
    s.value()
}

fn poly_eval(c: &[f64; DEGREE], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
}

fn poly_integral(c: &[f64; DEGREE], u: f64) -> f64 {
    c.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &a)| acc * u + a / (k + 1) as f64)
        * u
}

/// `Z(s) = m(s) + 1`, the expected renewal count including time zero.
/// Equals `e^s` on `[0, 1]`.
pub fn renewal_plus_one(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    if s >= INTERVALS as f64 {
        return 2.0 * s + 2.0 / 3.0;
    }
    let n = s as usize;
    poly_eval(&table().coeffs[n], s - n as f64)
}

/// `∫_0^s Z(r) dr`.
pub fn renewal_plus_one_integral(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let tab = table();
    let top = INTERVALS as f64;
    if s >= top {
        return tab.integrals[INTERVALS] + (s * s - top * top) + 2.0 / 3.0 * (s - top);
    }
    let n = s as usize;
    tab.integrals[n] + poly_integral(&tab.coeffs[n], s - n as f64)
}

/// Renewal function `m(s)` for uniform[0, 1] inter-arrival times.
pub fn renewal_function(s: f64) -> f64 {
    renewal_plus_one(s) - 1.0
}

/// The finite alternating series, summed with compensation.
pub fn gamma_series(t: f64) -> f64 {
    let top = t.floor() as usize + 1;
    let mut acc = CompensatedSum::new();
    let mut fact = 1.0;
    for j in 0..=top {
        if j > 0 {
            fact *= j as f64;
        }
        let base = t + 1.0 - j as f64;
        if base < 0.0 {
            break;
        }
        let term = (-(j as f64)).exp() * base.powi(j as i32) / fact;
        acc.add(if j % 2 == 0 { term } else { -term });
    }
    acc.value()
}

/// `Γ(t)` for `t ≥ 0`.
pub fn gamma(t: f64) -> f64 {
    let t = t.max(0.0);
    if t <= SERIES_CUTOFF {
        gamma_series(t)
    } else {
        (-(t + 1.0)).exp() * renewal_plus_one(t + 1.0)
    }
}

/// Monte Carlo estimate of `m(t + 1)` with its standard error.
///
/// Samples are drawn in fixed blocks, each with its own ChaCha stream, so the
/// estimate does not depend on the number of worker threads.
pub fn renewal_oracle(t: f64, samples: usize, seed: u64) -> (f64, f64) {
    const BLOCK: usize = 1 << 14;
    let horizon = t + 1.0;
    let blocks = samples.div_ceil(BLOCK);
    let parts: Vec<(f64, f64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(samples - b * BLOCK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut clock = 0.0;
                let mut n = 0u32;
                loop {
                    clock += rng.gen::<f64>();
                    if clock > horizon {
                        break;
                    }
                    n += 1;
                }
                let x = n as f64;
                s1 += x;
                s2 += x * x;
            }
            (s1, s2, count)
        })
        .collect();
    let (s1, s2, n) = parts
        .iter()
        .fold((0.0, 0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let n = n as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
