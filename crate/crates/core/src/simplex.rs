//! Dense two-phase simplex for `max c·x  s.t.  A x ≤ b, x ≥ 0`.
//!
//! The tableau is kept in dictionary form: one row per basic variable and one
//! column per nonbasic variable, so slack columns are never stored. Pivoting
//! is fully deterministic: the largest reduced cost enters, and after a run
//! of degenerate pivots the solver switches to Bland's smallest-index rule
//! until the objective moves again, which rules out cycling.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Smallest-index entering and leaving variables throughout.
    Bland,
    /// Largest reduced cost, falling back to Bland on degenerate streaks.
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;
const MAX_PIVOTS: usize = 2_000_000;

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Reduced costs followed by the current objective value.
    obj: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn stride(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, l: usize, e: usize) {
        let s = self.stride();
        let piv = self.data[l * s + e];
        {
            let row = &mut self.data[l * s..(l + 1) * s];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[e] = 1.0 / piv;
        }
        let pivot_row: Vec<f64> = self.data[l * s..(l + 1) * s].to_vec();
        let nz: Vec<usize> = (0..s).filter(|&j| pivot_row[j] != 0.0 && j != e).collect();
        for i in 0..self.rows {
            if i == l {
                continue;
            }
            let row = &mut self.data[i * s..(i + 1) * s];
            let f = row[e];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                row[j] -= f * pivot_row[j];
            }
            row[e] = -f * pivot_row[e];
        }
        let ce = self.obj[e];
        if ce != 0.0 {
            for &j in &nz {
                if j == self.cols {
                    self.obj[j] += ce * pivot_row[j];
                } else {
                    self.obj[j] -= ce * pivot_row[j];
                }
            }
            self.obj[e] = -ce * pivot_row[e];
        }
        std::mem::swap(&mut self.basic[l], &mut self.nonbasic[e]);
        self.pivots += 1;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..self.cols {
            let c = self.obj[j];
            if c <= COST_TOL {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) => {
                    let better = if bland {
                        self.nonbasic[j] < self.nonbasic[b]
                    } else {
                        c > self.obj[b] || (c == self.obj[b] && self.nonbasic[j] < self.nonbasic[b])
                    };
                    if better {
                        Some(j)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, e);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((b, r)) => {
                    let tie = (ratio - r).abs() <= 1e-12 * r.abs().max(1.0);
                    if ratio < r && !tie || tie && self.basic[i] < self.basic[b] {
                        Some((i, ratio))
                    } else {
                        Some((b, r))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn run(&mut self, rule: PivotRule) -> Status {
        let mut streak = 0usize;
        let mut last = self.obj[self.cols];
        loop {
            if self.pivots > MAX_PIVOTS {
                return Status::NumericalFailure;
            }
            let bland = rule == PivotRule::Bland || streak >= DEGENERATE_STREAK;
            let Some(e) = self.entering(bland) else {
                return Status::Optimal;
            };
            let Some(l) = self.leaving(e) else {
                return Status::Unbounded;
            };
            self.pivot(l, e);
            let now = self.obj[self.cols];
            if !now.is_finite() {
                return Status::NumericalFailure;
            }
            if now > last + 1e-13 * last.abs().max(1.0) {
                streak = 0;
                last = now;
            } else {
                streak += 1;
            }
        }
    }
}

/// Solves `max c·x` subject to `A x ≤ b`, `x ≥ 0`, with `A` given row-major.
pub fn maximize(c: &[f64], a: &[f64], b: &[f64], rule: PivotRule) -> Solution {
    let n = c.len();
    let m = b.len();
    assert_eq!(a.len(), n * m, "constraint matrix has wrong size");
    let needs_phase1 = b.iter().any(|&v| v < 0.0);
    let cols = if needs_phase1 { n + 1 } else { n };
    let s = cols + 1;
    let mut data = vec![0.0; m * s];
    for i in 0..m {
        data[i * s..i * s + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        if needs_phase1 {
            data[i * s + n] = -1.0;
        }
        data[i * s + cols] = b[i];
    }
    let mut t = Tableau {
        data,
        rows: m,
        cols,
        obj: vec![0.0; s],
        basic: (n + 1..=n + m).collect(),
        nonbasic: (0..cols).map(|j| if j < n { j } else { n + m + 1 }).collect(),
        pivots: 0,
    };
    // Variable ids: 0..n structural, n+1..=n+m slacks, n+m+1 auxiliary.
    let aux_id = n + m + 1;
    let fail = |status, pivots| Solution {
        status,
        objective: f64::NAN,
        x: vec![0.0; n],
        pivots,
    };

    if needs_phase1 {
        t.obj[n] = -1.0;
        let l = (0..m)
            .min_by(|&i, &j| b[i].total_cmp(&b[j]).then(i.cmp(&j)))
            .expect("phase 1 with no rows");
        t.pivot(l, n);
        match t.run(rule) {
            Status::Optimal => {}
            Status::Unbounded | Status::NumericalFailure => return fail(Status::NumericalFailure, t.pivots),
            Status::Infeasible => unreachable!(),
        }
        if t.obj[t.cols] < -1e-9 {
            return fail(Status::Infeasible, t.pivots);
        }
        if let Some(l) = t.basic.iter().position(|&v| v == aux_id) {
            let e = (0..t.cols)
                .filter(|&j| t.at(l, j).abs() > PIVOT_TOL)
                .max_by(|&i, &j| t.at(l, i).abs().total_cmp(&t.at(l, j).abs()));
            match e {
                Some(e) => t.pivot(l, e),
                None => return fail(Status::NumericalFailure, t.pivots),
            }
        }
        let col = t.nonbasic.iter().position(|&v| v == aux_id).expect("auxiliary is nonbasic");
        let mut data = Vec::with_capacity(m * n + m);
        for i in 0..m {
            let row = &t.data[i * s..(i + 1) * s];
            data.extend(row.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, v)| *v));
        }
        t.data = data;
        t.nonbasic.remove(col);
        t.cols = n;
    }

    let s = t.cols + 1;
    let mut obj = vec![0.0; s];
    for (j, &id) in t.nonbasic.iter().enumerate() {
        if id < n {
            obj[j] += c[id];
        }
    }
    for (i, &id) in t.basic.iter().enumerate() {
        if id < n && c[id] != 0.0 {
            let row = &t.data[i * s..(i + 1) * s];
            for j in 0..t.cols {
                obj[j] -= c[id] * row[j];
            }
            obj[t.cols] += c[id] * row[t.cols];
        }
    }
    t.obj = obj;

    let status = t.run(rule);
    if status != Status::Optimal {
        return fail(status, t.pivots);
    }
    let mut x = vec![0.0; n];
    for (i, &id) in t.basic.iter().enumerate() {
        if id < n {
            x[id] = t.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Solution {
        status: Status::Optimal,
        objective,
        x,
        pivots: t.pivots,
    }
}
