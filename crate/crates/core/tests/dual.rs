use approx::assert_abs_diff_eq;
use epsmech::delayed::{build_delayed, choose_mu};
use epsmech::dual::{build_path, dual_value, lambda_ic, optimize_beta, seed_beta, PathCertificate};
use epsmech::mechanism::expected_revenue;
use epsmech::{Error, ValueDistribution};

fn uniform() -> ValueDistribution {
    ValueDistribution::uniform(1.0).unwrap()
}

fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[test]
fn path_geometry() {
    let d = uniform();
    let (eps, beta) = (1e-3, 1.0 / 3.0);
    let c = build_path(&d, eps, beta).unwrap();
    assert_abs_diff_eq!(c.w(0.5), 0.5 + eps.powf(1.0 - beta), epsilon = 1e-15);
    assert_abs_diff_eq!(c.w(c.nu0), 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(c.mu, c.w(0.0), epsilon = 0.0);
    assert_abs_diff_eq!(c.mu, 0.5 * (c.slope_m - 1.0) + eps.powf(1.0 - beta), epsilon = 1e-15);
    for v in [0.1, 0.5, 0.7, c.nu0] {
        assert_abs_diff_eq!(c.w_inv(c.w(v)), v, epsilon = 1e-14);
    }
    let th = &c.thresholds;
    assert_eq!(th.len(), c.k + 1);
    for k in 0..c.k {
        assert!(th[k + 1] < th[k]);
        assert_abs_diff_eq!(c.w(th[k + 1]), th[k], epsilon = 1e-10);
    }
    assert!(th[c.k] <= c.mu && c.mu <= th[c.k - 1]);
    // step count against log(ε^{2β−1}) / log m
    let predicted = (eps.powf(2.0 * beta - 1.0)).ln() / c.slope_m.ln();
    let ratio = c.k as f64 / predicted;
    assert!((0.25..=4.0).contains(&ratio), "K = {}, predicted {predicted}", c.k);
}

#[test]
fn path_rejects_bad_inputs() {
    let d = uniform();
    assert!(matches!(build_path(&d, 1e-3, 0.6), Err(Error::Domain(_))));
    assert!(matches!(build_path(&d, 1e-3, 0.0), Err(Error::Domain(_))));
    assert!(matches!(build_path(&d, 0.5, 0.3), Err(Error::Domain(_))));
}

fn residual(c: &PathCertificate, d: &ValueDistribution, v: f64) -> f64 {
    let l = lambda_ic(c, d, v).unwrap();
    l - d.pdf(v) - c.slope(v) * lambda_ic(c, d, c.w(v)).unwrap()
}

#[test]
fn multiplier_solves_its_functional_equation() {
    for d in [uniform(), ValueDistribution::envelope_designed(3.0, 0.5, 0.25, 1.0, None).unwrap()] {
        let c = build_path(&d, 1e-3, 0.3).unwrap();
        for i in 0..1000 {
            let v = c.mu + (c.nu0 - c.mu) * (i as f64 + 0.5) / 1000.0;
            assert!(residual(&c, &d, v).abs() <= 1e-8, "v = {v}");
            assert!(lambda_ic(&c, &d, v).unwrap() >= 0.0);
        }
        for v in [c.nu0 + 1e-9, 0.5 * (c.nu0 + 1.0), 1.0] {
            assert_eq!(lambda_ic(&c, &d, v).unwrap(), d.pdf(v));
        }
        assert!(matches!(lambda_ic(&c, &d, 0.5 * c.mu), Err(Error::Domain(_))));
    }
}

#[test]
fn dual_terms_match_brute_force_quadrature() {
    let d = uniform();
    let (eps, beta) = (1e-3, 1.0 / 3.0);
    let c = dual_value(&d, eps, beta).unwrap();
    // λ jumps at the thresholds and wherever an iterate of w crosses p*.
    let mut cuts: Vec<f64> = c.thresholds.iter().copied().filter(|&t| t > c.mu).collect();
    let mut q = 0.5;
    while q > c.mu {
        cuts.push(q);
        q = c.w_inv(q);
    }
    cuts.extend([c.mu, 1.0]);
    cuts.sort_by(f64::total_cmp);
    let phi1 = eps
        * cuts
            .windows(2)
            .map(|p| midpoint(|v| lambda_ic(&c, &d, v).unwrap(), p[0], p[1], 20_000))
            .sum::<f64>();
    assert_abs_diff_eq!(c.phi1, phi1, epsilon = 1e-9);
    let phi2 = midpoint(|v| c.dual_density(&d, v).max(0.0), 0.0, 1.0, 2_000_000);
    assert_abs_diff_eq!(c.phi2, phi2, epsilon = 1e-6);
    assert!(c.phi1 <= eps * (c.k as f64 + 1.0));
    assert!(c.phi1 >= 0.0 && c.phi2 >= 0.0);
    assert_abs_diff_eq!(c.bound, c.phi1 + c.phi2, epsilon = 0.0);
}

#[test]
fn bound_dominates_the_construction() {
    let d = uniform();
    let eps = 1e-3;
    let c = dual_value(&d, eps, 1.0 / 3.0).unwrap();
    let mu = choose_mu(eps, 2.0, &d).unwrap().mu;
    let (m, _, _) = build_delayed(&d, eps, mu).unwrap();
    let rev = expected_revenue(&m, &d);
    assert!(c.bound - 0.25 >= rev - 0.25, "{} < {}", c.bound, rev);
}

#[test]
fn bound_collapses_to_monopoly_revenue() {
    let d = uniform();
    let mut last = f64::INFINITY;
    for eps in [1e-4, 1e-6, 1e-8] {
        let c = dual_value(&d, eps, 1.0 / 3.0).unwrap();
        assert!(c.bound >= 0.25);
        assert!(c.bound < last);
        last = c.bound;
    }
    assert!(last - 0.25 < 1e-3, "{last}");
}

#[test]
fn tail_integral_is_capped_once_the_integrand_stays_nonnegative() {
    for d in [uniform(), ValueDistribution::envelope_designed(2.0, 0.5, 0.25, 1.0, None).unwrap()] {
        let c = dual_value(&d, 1e-4, 1.0 / 3.0).unwrap();
        // smallest grid point x with Δ ≥ 0 on [x, ν₀]
        let n = 20_000;
        let grid: Vec<f64> = (0..=n).map(|i| c.nu0 * i as f64 / n as f64).collect();
        let mut start = n;
        while start > 0 && c.dual_density(&d, grid[start - 1]) >= 0.0 {
            start -= 1;
        }
        let x = grid[start];
        assert!(x < c.nu0);
        let tail = midpoint(|v| c.dual_density(&d, v), x, 1.0, 2_000_000);
        assert!(tail <= d.revenue(x) + 2.0 * (c.w(x) - x) + 1e-9);
    }
}

#[test]
fn beta_search() {
    assert_abs_diff_eq!(seed_beta(2.0), 1.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(seed_beta(3.0), 0.4, epsilon = 1e-15);
    assert!(0.5 - seed_beta(1e9) < 1e-9);

    let d = uniform();
    let eps = 1e-3;
    let (beta, cert) = optimize_beta(&d, eps, 2.0).unwrap();
    assert_eq!(beta, cert.beta);
    for i in 0..21 {
        let b = seed_beta(2.0) + (i as f64 - 10.0) * 0.01;
        if let Ok(other) = dual_value(&d, eps, b) {
            assert!(cert.bound <= other.bound);
        }
    }
}

fn designed(alpha: f64) -> ValueDistribution {
    let r_star = if alpha == 1.5 { 0.2 } else { 0.25 };
    ValueDistribution::envelope_designed(alpha, 0.5, r_star, 1.0, None).unwrap()
}

#[test]
fn certified_gain_decays_at_least_at_the_rate() {
    let grid = epsmech::numeric::logspace(1e-6, 1e-2, 9);
    for alpha in [1.5, 2.0, 3.0] {
        let d = designed(alpha);
        let (_, r_star) = d.optimal_price();
        let gains: Vec<f64> = grid
            .iter()
            .map(|&e| optimize_beta(&d, e, alpha).unwrap().1.bound - r_star)
            .collect();
        // least squares on the log-log points
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid.iter().zip(&gains).map(|(e, g)| (e.ln(), g.ln())).unzip();
        let (mx, my) = (xs.iter().sum::<f64>() / 9.0, ys.iter().sum::<f64>() / 9.0);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = num / den;
        let rate = alpha / (2.0 * alpha - 1.0);
        assert!(slope >= rate - 0.10, "alpha {alpha}: slope {slope}");
    }
}

#[test]
fn weak_duality_chain() {
    for alpha in [1.5, 2.0, 3.0] {
        let d = designed(alpha);
        let (_, r_star) = d.optimal_price();
        for eps in [1e-2, 1e-3, 1e-4] {
            let (_, cert) = optimize_beta(&d, eps, alpha).unwrap();
            let mu = choose_mu(eps, alpha, &d).unwrap().mu;
            let (m, _, _) = build_delayed(&d, eps, mu).unwrap();
            let delayed = expected_revenue(&m, &d);
            let det = epsmech::deterministic::optimal_det(&d, eps).unwrap().value;
            assert!(cert.bound >= delayed && delayed >= det && det >= r_star, "alpha {alpha}, eps {eps}");
        }
    }
}
