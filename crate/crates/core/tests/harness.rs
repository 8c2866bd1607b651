use std::fs;

use approx::assert_abs_diff_eq;
use epsmech::harness::{default_eps_grid, emit_plotdata, run_scaling, write_outputs, ScalingOptions};
use epsmech::ValueDistribution;

fn uniform() -> ValueDistribution {
    ValueDistribution::uniform(1.0).unwrap()
}

fn opts() -> ScalingOptions {
    ScalingOptions {
        verify_grid: 500,
        ..ScalingOptions::default()
    }
}

#[test]
fn default_grid_is_log_spaced() {
    let g = default_eps_grid();
    assert_eq!(g.len(), 8);
    assert_abs_diff_eq!(g[0], 1e-5, epsilon = 1e-20);
    assert_abs_diff_eq!(g[7], 1e-2, epsilon = 1e-17);
    for w in g.windows(2) {
        assert_abs_diff_eq!(w[1] / w[0], 10f64.powf(3.0 / 7.0), epsilon = 1e-12);
    }
}

#[test]
fn too_few_points_is_an_error() {
    assert!(run_scaling(&uniform(), &[1e-4, 1e-3, 1e-2], &opts()).is_err());
    let exp = ValueDistribution::truncated_exponential(1.0, 2.0).unwrap();
    assert!(run_scaling(&exp, &default_eps_grid(), &opts()).is_err());
}

#[test]
fn failing_points_are_recorded_not_fatal() {
    // ε = 0.2 leaves no room for the delayed window on [0, 1]
    let grid = [1e-2, 1e-3, 1e-4, 1e-5, 0.2, 3e-3];
    let rep = run_scaling(&uniform(), &grid, &ScalingOptions { alpha: Some(2.0), ..opts() }).unwrap();
    assert_eq!(rep.rows.len(), 6);
    let sorted: Vec<f64> = rep.rows.iter().map(|r| r.eps).collect();
    assert!(sorted.windows(2).all(|w| w[0] < w[1]));
    let bad = rep.rows.last().unwrap();
    assert_eq!(bad.eps, 0.2);
    assert!(!bad.verified && bad.error.is_some() && bad.delayed_gain.is_nan());
    assert!(rep.rows[..5].iter().all(|r| r.verified && r.error.is_none()));
    assert!(rep.fitted_slopes.delayed.is_finite());
}

#[test]
fn plot_series_are_anchored() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run_scaling(&uniform(), &default_eps_grid(), &opts()).unwrap();
    assert_abs_diff_eq!(rep.predicted_slope, 2.0 / 3.0, epsilon = 1e-15);
    let path = dir.path().join("plot.csv");
    emit_plotdata(&rep, &path).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["eps", "det", "delayed", "dual", "ref_linear", "ref_rate", "ref_sqrt"]);
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|r| r.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    let first = &rows[0];
    assert_abs_diff_eq!(first[4], first[1], epsilon = 1e-15);
    assert_abs_diff_eq!(first[5], first[2], epsilon = 1e-15);
    assert_abs_diff_eq!(first[6], first[3], epsilon = 1e-15);
    let last = &rows[7];
    let ratio = last[0] / first[0];
    assert_abs_diff_eq!(last[4] / first[4], ratio, epsilon = 1e-9 * ratio);
    assert_abs_diff_eq!(last[6] / first[6], ratio.sqrt(), epsilon = 1e-9);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let grid = default_eps_grid();
    write_outputs(&run_scaling(&uniform(), &grid, &opts()).unwrap(), a.path()).unwrap();
    write_outputs(&run_scaling(&uniform(), &grid, &opts()).unwrap(), b.path()).unwrap();
    for f in ["rows.csv", "plot.csv", "summary.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}
