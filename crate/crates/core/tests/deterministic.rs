use approx::assert_abs_diff_eq;
use epsmech::deterministic::{build_hard_soft, det_revenue, optimal_det};
use epsmech::mechanism::{expected_revenue, verify, MechanismKind, VERIFY_TOL};
use epsmech::numeric::loglog_slope;
use epsmech::{Error, ValueDistribution};

fn uniform() -> ValueDistribution {
    ValueDistribution::uniform(1.0).unwrap()
}

/// Revenue of the floor pair `(r, r + ε)` on uniform[0, 1], by hand.
fn uniform_floor_revenue(r: f64, eps: f64) -> f64 {
    let s = (r + eps).min(1.0);
    r * (1.0 - r) + (s - r) - (s * s - r * r) / 2.0
}

#[test]
fn equal_floors_collapse_to_posted_price() {
    let m = build_hard_soft(0.5, 0.5, 1.0).unwrap();
    assert_eq!(m.kind(), MechanismKind::PostedPrice);
    assert_eq!(build_hard_soft(0.5, 0.6, 1.0).unwrap().kind(), MechanismKind::HardSoftFloor);
    assert!(matches!(build_hard_soft(0.6, 0.5, 1.0), Err(Error::Domain(_))));
    assert!(matches!(build_hard_soft(0.6, 1.2, 1.0), Err(Error::Domain(_))));
}

#[test]
fn det_revenue_examples() {
    let d = uniform();
    assert_abs_diff_eq!(det_revenue(&d, 0.5, 0.01).unwrap().value, 0.254950, epsilon = 1e-14);
    assert_abs_diff_eq!(det_revenue(&d, 0.495, 0.01).unwrap().value, 0.254975, epsilon = 1e-14);
    for r in [0.0, 0.2, 0.7] {
        assert_eq!(det_revenue(&d, r, 0.0).unwrap().value, d.revenue(r));
    }
    let clamp = det_revenue(&d, 0.995, 0.01).unwrap();
    assert!(clamp.clamped);
    assert_abs_diff_eq!(clamp.value, uniform_floor_revenue(0.995, 0.01), epsilon = 1e-14);
    // the closed form agrees with quadrature of the mechanism itself
    let m = build_hard_soft(0.42, 0.47, 1.0).unwrap();
    assert_abs_diff_eq!(expected_revenue(&m, &d), det_revenue(&d, 0.42, 0.05).unwrap().value, epsilon = 1e-10);
}

#[test]
fn optimal_det_examples() {
    let d = uniform();
    let o = optimal_det(&d, 0.01).unwrap();
    // d/dr [r(1 − r) + ε − ε(2r + ε)/2] = 1 − 2r − ε = 0
    assert_abs_diff_eq!(o.reserve, 0.495, epsilon = 1e-8);
    assert_abs_diff_eq!(o.value, 0.254975, epsilon = 1e-13);
    assert_abs_diff_eq!(o.gain, 0.004975, epsilon = 1e-13);

    let z = optimal_det(&d, 0.0).unwrap();
    assert_abs_diff_eq!(z.reserve, 0.5, epsilon = 1e-8);
    assert_abs_diff_eq!(z.gain, 0.0, epsilon = 1e-15);
}

#[test]
fn optimal_det_gain_is_linear_in_eps() {
    let d = uniform();
    let eps: Vec<f64> = (0..9).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let gains: Vec<f64> = eps.iter().map(|&e| optimal_det(&d, e).unwrap().gain).collect();
    for (&e, &g) in eps.iter().zip(&gains) {
        // uniform: gain = ε(1 − ε)/2 + ε²/4 exactly
        let exact = e / 2.0 - e * e / 4.0;
        assert_abs_diff_eq!(g, exact, epsilon = 1e-15);
        assert!(g <= e && g >= 0.5 * e - e * e);
    }
    let slope = loglog_slope(&eps, &gains).unwrap();
    assert!((slope - 1.0).abs() <= 0.02, "slope {slope}");
}

#[test]
fn optimal_floor_mechanism_is_feasible() {
    for d in [
        uniform(),
        ValueDistribution::truncated_exponential(1.5, 2.0).unwrap(),
        ValueDistribution::envelope_designed(3.0, 0.5, 0.25, 1.0, None).unwrap(),
    ] {
        for eps in [1e-3, 1e-2] {
            let o = optimal_det(&d, eps).unwrap();
            let m = build_hard_soft(o.reserve, o.reserve + eps, d.v_bar()).unwrap();
            assert!(verify(&m, &d, eps, 2000, VERIFY_TOL).unwrap().passed);
            assert_abs_diff_eq!(expected_revenue(&m, &d), o.value, epsilon = 1e-9);
        }
    }
}
