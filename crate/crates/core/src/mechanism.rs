//! Direct selling mechanisms `(x, t)` on `[0, v_bar]`, their expected revenue,
//! the buyer's best response and grid verification of participation and
//! approximate incentive constraints.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delayed::DelayedParams;
use crate::distributions::ValueDistribution;
use crate::error::{domain, Error, Result};
use crate::numeric::{golden_max, linspace, merge_breaks, simpson_pieces, CompensatedSum};

/// Number of report candidates in the default best-response grid.
pub const REPORT_GRID: usize = 10_000;
/// Absolute tolerance for revenue quadrature.
pub const REVENUE_TOL: f64 = 1e-9;
/// Default verification tolerance in units of utility.
pub const VERIFY_TOL: f64 = 1e-8;

const TIE_TOL: f64 = 1e-12;
/// Slack allowed when checking `0 ≤ x ≤ 1` at construction.
const ALLOC_TOL: f64 = 1e-9;

/// A closed-form piece of an allocation or transfer rule.
#[derive(Clone)]
pub enum Rule {
    Const(f64),
    Affine { intercept: f64, slope: f64 },
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Rule {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Rule::Const(c) => *c,
            Rule::Affine { intercept, slope } => intercept + slope * v,
            Rule::Analytic(f) => f(v),
        }
    }

    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Rule::Analytic(Arc::new(f))
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Const(c) => write!(f, "Const({c})"),
            Rule::Affine { intercept, slope } => write!(f, "Affine({intercept} + {slope}·v)"),
            Rule::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

/// One interval of the partition with its allocation and transfer rules.
/// `knots` lists interior points where the rules lose smoothness.
#[derive(Debug, Clone)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub alloc: Rule,
    pub transfer: Rule,
    pub knots: Vec<f64>,
}

impl Segment {
    pub fn new(lo: f64, hi: f64, alloc: Rule, transfer: Rule) -> Self {
        Segment {
            lo,
            hi,
            alloc,
            transfer,
            knots: Vec::new(),
        }
    }

    pub fn with_knots(mut self, knots: Vec<f64>) -> Self {
        self.knots = knots;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    PostedPrice,
    HardSoftFloor,
    PerturbedDelayed,
    LpDiscrete,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSpec {
    Const(f64),
    Affine { intercept: f64, slope: f64 },
}

impl From<RuleSpec> for Rule {
    fn from(r: RuleSpec) -> Self {
        match r {
            RuleSpec::Const(c) => Rule::Const(c),
            RuleSpec::Affine { intercept, slope } => Rule::Affine { intercept, slope },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub lo: f64,
    pub hi: f64,
    pub x: RuleSpec,
    pub t: RuleSpec,
}

/// Parameters from which a mechanism is rebuilt; this is what gets serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MechanismSpec {
    PostedPrice { v_bar: f64, price: f64 },
    HardSoftFloor { v_bar: f64, hard: f64, soft: f64 },
    PerturbedDelayed(DelayedParams),
    /// Type grid with one `(x, t)` pair per cell; cells are centred on
    /// `values` and cover `[0, v_bar]`.
    LpDiscrete { v_bar: f64, values: Vec<f64>, x: Vec<f64>, t: Vec<f64> },
    Custom { v_bar: f64, segments: Vec<SegmentSpec> },
}

#[derive(Serialize, Deserialize)]
struct MechanismDoc {
    #[serde(flatten)]
    spec: MechanismSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<[f64; 3]>>,
}

/// Dense sampling of `(report, x, t)` used for best-response search.
#[derive(Debug, Clone)]
pub struct ReportGrid {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

/// A direct mechanism stored as a partition of `[0, v_bar]` into segments.
#[derive(Debug, Clone)]
pub struct Mechanism {
    spec: MechanismSpec,
    v_bar: f64,
    segments: Vec<Segment>,
    sampled: Option<Vec<[f64; 3]>>,
    reports: OnceLock<ReportGrid>,
}

impl Mechanism {
    /// Builds from explicit segments; `spec` records how to rebuild it.
    pub fn from_segments(spec: MechanismSpec, v_bar: f64, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return domain("mechanism needs at least one segment");
        }
        let scale = v_bar.abs().max(1.0);
        if segments[0].lo.abs() > 1e-12 * scale || (segments.last().unwrap().hi - v_bar).abs() > 1e-12 * scale {
            return domain("segments must cover [0, v_bar]");
        }
        for w in segments.windows(2) {
            if (w[0].hi - w[1].lo).abs() > 1e-12 * scale {
                return domain(format!("gap or overlap at {} / {}", w[0].hi, w[1].lo));
            }
        }
        if segments.iter().any(|s| !(s.hi >= s.lo)) {
            return domain("segment with hi < lo");
        }
        for s in &segments {
            for v in linspace(s.lo, s.hi, 65) {
                let x = s.alloc.eval(v);
                if !(-ALLOC_TOL..=1.0 + ALLOC_TOL).contains(&x) {
                    return domain(format!("allocation {x} outside [0, 1] at v = {v}"));
                }
            }
        }
        Ok(Mechanism {
            spec,
            v_bar,
            segments,
            sampled: None,
            reports: OnceLock::new(),
        })
    }

    pub fn from_spec(spec: MechanismSpec) -> Result<Self> {
        match &spec {
            MechanismSpec::PostedPrice { v_bar, price } => {
                crate::deterministic::floor_segments(*price, *price, *v_bar)
                    .and_then(|segs| Self::from_segments(spec.clone(), *v_bar, segs))
            }
            MechanismSpec::HardSoftFloor { v_bar, hard, soft } => {
                crate::deterministic::floor_segments(*hard, *soft, *v_bar)
                    .and_then(|segs| Self::from_segments(spec.clone(), *v_bar, segs))
            }
            MechanismSpec::PerturbedDelayed(p) => {
                let segs = crate::delayed::segments(p)?;
                Self::from_segments(spec.clone(), p.v_bar, segs)
            }
            MechanismSpec::LpDiscrete { v_bar, values, x, t } => {
                let n = values.len();
                if n == 0 || x.len() != n || t.len() != n {
                    return domain("lp-discrete vectors must be nonempty and of equal length");
                }
                let mut segs = Vec::with_capacity(n);
                for i in 0..n {
                    let lo = if i == 0 { 0.0 } else { 0.5 * (values[i - 1] + values[i]) };
                    let hi = if i + 1 == n { *v_bar } else { 0.5 * (values[i] + values[i + 1]) };
                    segs.push(Segment::new(lo, hi, Rule::Const(x[i]), Rule::Const(t[i])));
                }
                Self::from_segments(spec.clone(), *v_bar, segs)
            }
            MechanismSpec::Custom { v_bar, segments } => {
                let segs = segments
                    .iter()
                    .map(|s| Segment::new(s.lo, s.hi, s.x.into(), s.t.into()))
                    .collect();
                Self::from_segments(spec.clone(), *v_bar, segs)
            }
        }
    }

    pub fn posted_price(price: f64, v_bar: f64) -> Result<Self> {
        Self::from_spec(MechanismSpec::PostedPrice { v_bar, price })
    }

    /// The mechanism that never sells and never charges.
    pub fn zero(v_bar: f64) -> Result<Self> {
        Self::from_spec(MechanismSpec::Custom {
            v_bar,
            segments: vec![SegmentSpec {
                lo: 0.0,
                hi: v_bar,
                x: RuleSpec::Const(0.0),
                t: RuleSpec::Const(0.0),
            }],
        })
    }

    pub fn kind(&self) -> MechanismKind {
        match self.spec {
            MechanismSpec::PostedPrice { .. } => MechanismKind::PostedPrice,
            MechanismSpec::HardSoftFloor { .. } => MechanismKind::HardSoftFloor,
            MechanismSpec::PerturbedDelayed(_) => MechanismKind::PerturbedDelayed,
            MechanismSpec::LpDiscrete { .. } => MechanismKind::LpDiscrete,
            MechanismSpec::Custom { .. } => MechanismKind::Custom,
        }
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_at(&self, v: f64) -> &Segment {
        let idx = self.segments.partition_point(|s| s.lo <= v);
        &self.segments[idx.saturating_sub(1)]
    }

    /// Allocation probability for report `v`.
    pub fn alloc(&self, v: f64) -> f64 {
        self.segment_at(v).alloc.eval(v)
    }

    /// Payment for report `v`.
    pub fn transfer(&self, v: f64) -> f64 {
        self.segment_at(v).transfer.eval(v)
    }

    /// Segment boundaries including `0` and `v_bar`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.segments.iter().map(|s| s.lo).collect();
        b.push(self.v_bar);
        b
    }

    /// Segment boundaries plus interior knots.
    pub fn all_breakpoints(&self) -> Vec<f64> {
        let mut b = self.breakpoints();
        for s in &self.segments {
            b.extend_from_slice(&s.knots);
        }
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    /// Attaches a dense `(v, x, t)` sampling to the serialized form.
    pub fn with_sampled_grid(mut self, n: usize) -> Self {
        let grid = linspace(0.0, self.v_bar, n.max(2))
            .into_iter()
            .map(|v| [v, self.alloc(v), self.transfer(v)])
            .collect();
        self.sampled = Some(grid);
        self
    }

    pub fn to_json(&self) -> String {
        let doc = MechanismDoc {
            spec: self.spec.clone(),
            grid: self.sampled.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("mechanism serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: MechanismDoc = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let mut m = Self::from_spec(doc.spec)?;
        m.sampled = doc.grid;
        Ok(m)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    /// Candidate reports: `n` evenly spaced points plus every breakpoint.
    pub fn report_grid(&self, n: usize) -> ReportGrid {
        let mut w = linspace(0.0, self.v_bar, n.max(2));
        w.extend(self.all_breakpoints());
        w.sort_by(|a, b| a.total_cmp(b));
        w.dedup();
        let x = w.iter().map(|&r| self.alloc(r)).collect();
        let t = w.iter().map(|&r| self.transfer(r)).collect();
        ReportGrid { w, x, t }
    }

    fn default_reports(&self) -> &ReportGrid {
        self.reports.get_or_init(|| self.report_grid(REPORT_GRID))
    }

    /// Buyer's best report at value `v` and the resulting utility.
    pub fn best_response(&self, v: f64) -> (f64, f64) {
        best_response_on(self, self.default_reports(), v)
    }
}

/// Best response over a given report grid, refined locally by golden-section
/// search around the grid maximizer. Ties go to the larger payment, then to
/// the smaller report.
pub fn best_response_on(mech: &Mechanism, grid: &ReportGrid, v: f64) -> (f64, f64) {
    let mut best = 0usize;
    let mut best_u = v * grid.x[0] - grid.t[0];
    for j in 1..grid.w.len() {
        let u = v * grid.x[j] - grid.t[j];
        if u > best_u + TIE_TOL || ((u - best_u).abs() <= TIE_TOL && grid.t[j] > grid.t[best] + TIE_TOL) {
            best_u = u;
            best = j;
        }
    }
    let lo = grid.w[best.saturating_sub(1)];
    let hi = grid.w[(best + 1).min(grid.w.len() - 1)];
    if hi > lo {
        let g = |r: f64| v * mech.alloc(r) - mech.transfer(r);
        let (r, u) = golden_max(g, lo, hi, 1e-13 * mech.v_bar.max(1.0));
        if u > best_u + 4.0 * f64::EPSILON * best_u.abs().max(1.0) {
            return (u, r);
        }
    }
    (best_u, grid.w[best])
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub min_ir_slack: f64,
    pub min_ic_slack: f64,
    pub worst_value: f64,
    pub worst_report: f64,
    pub grid_size: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `E[t(v)]` by adaptive Simpson on every segment.
pub fn expected_revenue(mech: &Mechanism, dist: &ValueDistribution) -> f64 {
    let dist_breaks = dist.breakpoints();
    let mut acc = CompensatedSum::new();
    let v_bar = mech.v_bar().min(dist.v_bar());
    for seg in mech.segments() {
        let hi = seg.hi.min(v_bar);
        if !(hi > seg.lo) {
            continue;
        }
        let mut breaks = seg.knots.clone();
        breaks.extend_from_slice(&dist_breaks);
        let tol = REVENUE_TOL * (hi - seg.lo) / v_bar;
        let f = |v: f64| seg.transfer.eval(v) * dist.pdf(v);
        acc.add(simpson_pieces(&f, seg.lo, hi, &breaks, tol));
    }
    acc.value()
}

/// Checks IR and ε-IC at `grid_size` evenly spaced values plus breakpoints.
pub fn verify(mech: &Mechanism, dist: &ValueDistribution, eps: f64, grid_size: usize, tol: f64) -> Result<VerificationReport> {
    if !(eps >= 0.0) {
        return domain("eps must be nonnegative");
    }
    if (mech.v_bar() - dist.v_bar()).abs() > 1e-12 * dist.v_bar() {
        return domain("mechanism and distribution supports differ");
    }
    let mut values = linspace(0.0, mech.v_bar(), grid_size.max(2));
    values.extend(mech.breakpoints());
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let reports = mech.default_reports();
    let rows: Vec<(f64, f64, f64, f64)> = values
        .par_iter()
        .map(|&v| {
            let ir = v * mech.alloc(v) - mech.transfer(v);
            let (u, w) = best_response_on(mech, reports, v);
            (v, ir, ir - (u - eps), w)
        })
        .collect();
    let mut min_ir = f64::INFINITY;
    let mut min_ic = f64::INFINITY;
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for &(v, ir, ic, w) in &rows {
        min_ir = min_ir.min(ir);
        min_ic = min_ic.min(ic);
        let s = ir.min(ic);
        if s < worst.0 {
            worst = (s, v, if ic <= ir { w } else { v });
        }
    }
    Ok(VerificationReport {
        min_ir_slack: min_ir,
        min_ic_slack: min_ic,
        worst_value: worst.1,
        worst_report: worst.2,
        grid_size: values.len(),
        tolerance: tol,
        passed: min_ir >= -tol && min_ic >= -tol,
    })
}

/// `min (v − v')(x(v) − x(v')) + 2ε` over pairs of a 500-point grid.
pub fn approximate_monotonicity_check(mech: &Mechanism, eps: f64) -> f64 {
    let vs = linspace(0.0, mech.v_bar(), 500);
    let xs: Vec<f64> = vs.iter().map(|&v| mech.alloc(v)).collect();
    let mut worst = f64::INFINITY;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            worst = worst.min((vs[j] - vs[i]) * (xs[j] - xs[i]));
        }
    }
    worst + 2.0 * eps
}

/// The buyer's declared reporting strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportingMap {
    Truthful { v_bar: f64 },
    HardSoft { v_bar: f64, hard: f64, soft: f64 },
    Delayed(DelayedParams),
}

impl ReportingMap {
    /// Report chosen at value `v`.
    pub fn forward(&self, v: f64) -> f64 {
        match self {
            ReportingMap::Truthful { .. } => v,
            ReportingMap::HardSoft { hard, .. } => {
                if v < *hard {
                    0.0
                } else {
                    *hard
                }
            }
            ReportingMap::Delayed(p) => p.report(v),
        }
    }

    /// Generalized inverse: the largest value reporting at most `r`.
    pub fn inverse_w(&self, r: f64) -> f64 {
        match self {
            ReportingMap::Truthful { .. } => r,
            ReportingMap::HardSoft { v_bar, hard, .. } => {
                if r < *hard {
                    *hard
                } else {
                    *v_bar
                }
            }
            ReportingMap::Delayed(p) => p.inverse(r),
        }
    }

    /// Points where `forward` jumps or kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ReportingMap::Truthful { .. } => Vec::new(),
            ReportingMap::HardSoft { hard, .. } => vec![*hard],
            ReportingMap::Delayed(p) => vec![p.p_star - p.delta, p.p_star + p.delta + p.mu],
        }
    }
}

/// Largest gap between the searched utility `u(v)` and
/// `u(0) + ∫_0^v x(r(s)) ds` for the declared reporting map `r`.
///
/// The integral is accumulated cell by cell with a two-point Gauss rule on a
/// 10⁴-cell grid refined at all breakpoints, which never samples exactly at a
/// jump of the integrand.
pub fn envelope_utility_check(mech: &Mechanism, reporting: &ReportingMap) -> f64 {
    const CELLS: usize = 10_000;
    let v_bar = mech.v_bar();
    let mut breaks = reporting.breakpoints();
    breaks.extend(mech.all_breakpoints());
    let uniform = linspace(0.0, v_bar, CELLS + 1);
    breaks.extend_from_slice(&uniform);
    let pts = merge_breaks(0.0, v_bar, &breaks);
    let g = 0.5 / 3f64.sqrt();
    let integrand = |s: f64| mech.alloc(reporting.forward(s));
    let mut cumulative = Vec::with_capacity(pts.len());
    let mut acc = CompensatedSum::new();
    cumulative.push(0.0);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let h = b - a;
        acc.add(0.5 * h * (integrand(m - g * h) + integrand(m + g * h)));
        cumulative.push(acc.value());
    }
    let u0 = mech.best_response(0.0).0;
    pts.par_iter()
        .zip(cumulative.par_iter())
        .map(|(&v, &int)| (mech.best_response(v).0 - (u0 + int)).abs())
        .reduce(|| 0.0, f64::max)
}

/// Certified gain bound `2√ε·r* + √ε` from rounding an ε-IC mechanism.
pub fn nisan_bound(dist: &ValueDistribution, eps: f64) -> Result<f64> {
    if !(0.0..=0.25).contains(&eps) {
        return domain(format!("nisan bound needs 0 ≤ eps ≤ 1/4, got {eps}"));
    }
    let (_, r_star) = dist.optimal_price();
    let d = eps.sqrt();
    Ok(2.0 * d * r_star + d)
}
