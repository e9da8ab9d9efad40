//! Dense two-phase tableau simplex.
//!
//! Pricing is largest-reduced-cost until a run of degenerate pivots is seen,
//! after which Bland's smallest-index rule is used for the rest of the solve.
//! Ratio-test ties always go to the smallest basic index, so the pivot
//! sequence is a pure function of the input.

use nalgebra::DMatrix;

use super::{
    farkas_margin, FarkasCertificate, LinearProgram, LpSolution, Relation, Sense, Status,
    TRACE_ENV,
};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// How an original variable is rebuilt from standard-form columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = offset + x'`
    Shift { col: usize, offset: f64 },
    /// `x = offset − x'`
    Flip { col: usize, offset: f64 },
    /// `x = x⁺ − x⁻`
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Dense `A'` over structural, slack and artificial columns.
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Row sign flips applied to make `b ≥ 0`.
    sigma: Vec<f64>,
    n_struct: usize,
    n_rows_orig: usize,
    vars: Vec<VarMap>,
    /// Constant added to the objective by shifts.
    c0: f64,
}

fn standardize(lp: &LinearProgram) -> Standard {
    let n = lp.num_vars();
    let mut vars = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let m = if l.is_finite() {
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            VarMap::Shift {
                col: ncols,
                offset: l,
            }
        } else if u.is_finite() {
            VarMap::Flip {
                col: ncols,
                offset: u,
            }
        } else {
            ncols += 1;
            VarMap::Split {
                pos: ncols - 1,
                neg: ncols,
            }
        };
        ncols += 1;
        vars.push(m);
    }
    let n_struct = ncols;

    let sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let cost: Vec<f64> = match lp.sense {
        Sense::Feasibility => vec![0.0; n],
        _ => lp.objective.iter().map(|c| sign * c).collect(),
    };

    // Rows in (coeffs over structural columns, relation, rhs) form.
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    for con in &lp.constraints {
        let mut coeffs = Vec::with_capacity(con.coeffs.len());
        let mut rhs = con.rhs;
        for &(j, v) in &con.coeffs {
            match vars[j] {
                VarMap::Shift { col, offset } => {
                    coeffs.push((col, v));
                    rhs -= v * offset;
                }
                VarMap::Flip { col, offset } => {
                    coeffs.push((col, -v));
                    rhs -= v * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs.push((pos, v));
                    coeffs.push((neg, -v));
                }
            }
        }
        rows.push((coeffs, con.relation, rhs));
    }
    let n_rows_orig = rows.len();
    for &(col, width) in &bound_rows {
        rows.push((vec![(col, 1.0)], Relation::Le, width));
    }

    let mut c_struct = vec![0.0; n_struct];
    let mut c0 = 0.0;
    for j in 0..n {
        match vars[j] {
            VarMap::Shift { col, offset } => {
                c_struct[col] += cost[j];
                c0 += cost[j] * offset;
            }
            VarMap::Flip { col, offset } => {
                c_struct[col] -= cost[j];
                c0 += cost[j] * offset;
            }
            VarMap::Split { pos, neg } => {
                c_struct[pos] += cost[j];
                c_struct[neg] -= cost[j];
            }
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let total = n_struct + n_slack + m;
    let mut a = DMatrix::zeros(m, total);
    let mut b = vec![0.0; m];
    let mut sigma = vec![1.0; m];
    let mut slack = n_struct;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let s = if *rhs < 0.0 { -1.0 } else { 1.0 };
        sigma[i] = s;
        for &(col, v) in coeffs {
            a[(i, col)] += s * v;
        }
        match rel {
            Relation::Le => {
                a[(i, slack)] = s;
                slack += 1;
            }
            Relation::Ge => {
                a[(i, slack)] = -s;
                slack += 1;
            }
            Relation::Eq => {}
        }
        b[i] = s * rhs;
        a[(i, n_struct + n_slack + i)] = 1.0;
    }
    let mut c = vec![0.0; total];
    c[..n_struct].copy_from_slice(&c_struct);
    Standard {
        a,
        b,
        c,
        sigma,
        n_struct,
        n_rows_orig,
        vars,
        c0,
    }
}

struct Tableau {
    m: usize,
    width: usize,
    /// `m` constraint rows then the cost row; last column is the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
    first_art: usize,
    bland: bool,
    degenerate_run: usize,
    iterations: usize,
    limit: usize,
    trace: bool,
}

impl Tableau {
    fn new(std: &Standard, trace: bool) -> Self {
        let (m, n) = std.a.shape();
        let width = n + 1;
        let mut t = vec![0.0; (m + 1) * width];
        for i in 0..m {
            for j in 0..n {
                t[i * width + j] = std.a[(i, j)];
            }
            t[i * width + n] = std.b[i];
        }
        let first_art = n - m;
        Tableau {
            m,
            width,
            t,
            basis: (first_art..n).collect(),
            first_art,
            bland: false,
            degenerate_run: 0,
            iterations: 0,
            limit: 20_000 + 50 * (m + n),
            trace,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn cost_row(&mut self) -> &mut [f64] {
        let (m, w) = (self.m, self.width);
        &mut self.t[m * w..(m + 1) * w]
    }

    /// Load reduced costs for cost vector `c` under the current basis.
    fn price(&mut self, c: &[f64]) {
        let (m, w) = (self.m, self.width);
        let mut row = vec![0.0; w];
        row[..c.len()].copy_from_slice(c);
        for i in 0..m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    row[j] -= cb * self.t[i * w + j];
                }
            }
        }
        self.cost_row().copy_from_slice(&row);
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (x, pr) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn entering(&self) -> Option<usize> {
        let base = self.m * self.width;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.first_art {
            let d = self.t[base + j];
            if d < -COST_TOL {
                if self.bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, v)| d < v) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a > PIVOT_TOL {
                let ratio = self.rhs(i).max(0.0) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }

    /// Run simplex iterations; `Ok(false)` means unbounded.
    fn optimize(&mut self, phase: u8) -> Result<bool> {
        loop {
            let Some(c) = self.entering() else {
                return Ok(true);
            };
            let Some(r) = self.leaving(c) else {
                return Ok(false);
            };
            let step = self.rhs(r).max(0.0) / self.at(r, c);
            if step <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_RUN && !self.bland {
                    self.bland = true;
                    if self.trace {
                        eprintln!("lp: switching to smallest-index pricing");
                    }
                }
            } else {
                self.degenerate_run = 0;
            }
            if self.trace {
                let z = -self.t[self.m * self.width + self.width - 1];
                eprintln!(
                    "lp: phase {phase} iter {} enter {c} leave {} obj {z:.12e}",
                    self.iterations, self.basis[r]
                );
            }
            self.pivot(r, c);
            self.iterations += 1;
            if self.iterations > self.limit {
                return Err(Error::Lp(format!(
                    "iteration limit {} reached",
                    self.limit
                )));
            }
        }
    }

    fn primal(&self, total: usize) -> Vec<f64> {
        let mut x = vec![0.0; total];
        for i in 0..self.m {
            x[self.basis[i]] = self.rhs(i);
        }
        x
    }
}

fn unmap(std: &Standard, xs: &[f64]) -> Vec<f64> {
    std.vars
        .iter()
        .map(|v| match *v {
            VarMap::Shift { col, offset } => offset + xs[col],
            VarMap::Flip { col, offset } => offset - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect()
}

/// Re-solve the basis system from the original data for accuracy.
fn refine(std: &Standard, basis: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = basis.len();
    if m == 0 {
        return Some((vec![0.0; std.a.ncols()], Vec::new()));
    }
    let bm = DMatrix::from_fn(m, m, |i, k| std.a[(i, basis[k])]);
    let lu = bm.clone().full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let xb = lu.solve(&nalgebra::DVector::from_column_slice(&std.b))?;
    let cb = nalgebra::DVector::from_iterator(m, basis.iter().map(|&j| std.c[j]));
    let y = bm.transpose().full_piv_lu().solve(&cb)?;
    let mut x = vec![0.0; std.a.ncols()];
    for (k, &j) in basis.iter().enumerate() {
        x[j] = xb[k];
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, y.iter().copied().collect()))
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let trace = std::env::var_os(TRACE_ENV).is_some();
    let std = standardize(lp);
    let (m, total) = std.a.shape();
    let mut tab = Tableau::new(&std, trace);

    // Phase I: minimize the sum of artificials.
    let mut c1 = vec![0.0; total];
    c1[tab.first_art..].iter_mut().for_each(|v| *v = 1.0);
    tab.price(&c1);
    tab.optimize(1)?;
    let w = -tab.t[m * tab.width + tab.width - 1];
    let bscale = std.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if w > 1e-9 * bscale {
        return infeasible(lp, &std, &tab);
    }

    // Drive artificials out of the basis where possible.
    for i in 0..m {
        if tab.basis[i] >= tab.first_art {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..tab.first_art {
                let a = tab.at(i, j).abs();
                if a > PIVOT_TOL && best.map_or(true, |(_, v)| a > v) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                tab.pivot(i, j);
            }
        }
    }

    tab.price(&std.c);
    if !tab.optimize(2)? {
        return Ok(LpSolution {
            status: Status::Unbounded,
            x: Vec::new(),
            duals: Vec::new(),
            objective: if lp.sense == Sense::Maximize {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            max_violation: 0.0,
            duality_gap: 0.0,
            iterations: tab.iterations,
            farkas: None,
        });
    }

    // Tableau values, then a refined solve of the same basis; keep the better.
    let xs_tab = tab.primal(total);
    let y_tab: Vec<f64> = (0..m)
        .map(|i| std.c[tab.first_art + i] - tab.t[m * tab.width + tab.first_art + i])
        .collect();
    let x_tab = unmap(&std, &xs_tab);
    let v_tab = lp.violation(&x_tab);
    let (xs, y, x, viol) = match refine(&std, &tab.basis) {
        Some((xs_r, y_r)) => {
            let x_r = unmap(&std, &xs_r);
            let v_r = lp.violation(&x_r);
            if v_r <= v_tab {
                (xs_r, y_r, x_r, v_r)
            } else {
                (xs_tab, y_tab, x_tab, v_tab)
            }
        }
        None => (xs_tab, y_tab, x_tab, v_tab),
    };
    if viol > 1e-6 {
        return Err(Error::Numerical(format!(
            "optimal basis violates constraints by {viol:.3e}"
        )));
    }

    let sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let primal_std: f64 = std.c.iter().zip(&xs).map(|(c, v)| c * v).sum();
    let dual_std: f64 = y.iter().zip(&std.b).map(|(a, b)| a * b).sum();
    let duals = (0..std.n_rows_orig)
        .map(|i| {
            let d = sign * std.sigma[i] * y[i];
            if lp.sense == Sense::Feasibility {
                0.0
            } else {
                d
            }
        })
        .collect();
    let objective = if lp.sense == Sense::Feasibility {
        0.0
    } else {
        lp.objective_value(&x)
    };
    debug_assert!(std.n_struct <= total);
    Ok(LpSolution {
        status: Status::Optimal,
        x,
        duals,
        objective,
        max_violation: viol,
        duality_gap: (primal_std - dual_std).abs() / (1.0 + (primal_std + std.c0).abs()),
        iterations: tab.iterations,
        farkas: None,
    })
}

fn infeasible(lp: &LinearProgram, std: &Standard, tab: &Tableau) -> Result<LpSolution> {
    let m = tab.m;
    let base = m * tab.width;
    let from_tableau: Vec<f64> = (0..std.n_rows_orig)
        .map(|i| 1.0 - tab.t[base + tab.first_art + i])
        .collect();
    let mut c1 = vec![0.0; std.a.ncols()];
    c1[tab.first_art..].iter_mut().for_each(|v| *v = 1.0);
    let refined = {
        let bm = DMatrix::from_fn(m, m, |i, k| std.a[(i, tab.basis[k])]);
        let cb = nalgebra::DVector::from_iterator(m, tab.basis.iter().map(|&j| c1[j]));
        bm.transpose()
            .full_piv_lu()
            .solve(&cb)
            .map(|y| y.iter().take(std.n_rows_orig).copied().collect::<Vec<f64>>())
    };

    let to_geq = |ys: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = lp
            .constraints
            .iter()
            .zip(ys)
            .zip(&std.sigma)
            .map(|((c, &y), &s)| {
                let lambda = s * y;
                match c.relation {
                    Relation::Le => -lambda,
                    _ => lambda,
                }
            })
            .collect();
        // clean sign noise on inequality multipliers
        for (v, c) in out.iter_mut().zip(&lp.constraints) {
            if c.relation != Relation::Eq && *v < 0.0 && *v > -1e-10 {
                *v = 0.0;
            }
        }
        let scale = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            out.iter_mut().for_each(|v| *v /= scale);
        }
        out.iter_mut().for_each(|v| {
            if v.abs() < 1e-14 {
                *v = 0.0
            }
        });
        out
    };

    let mut best: Option<FarkasCertificate> = None;
    for cand in std::iter::once(Some(from_tableau)).chain(std::iter::once(refined)) {
        let Some(ys) = cand else { continue };
        let y = to_geq(&ys);
        let margin = farkas_margin(lp, &y);
        let signs_ok = lp
            .constraints
            .iter()
            .zip(&y)
            .all(|(c, &v)| c.relation == Relation::Eq || v >= 0.0);
        if signs_ok && margin.is_finite() && best.as_ref().map_or(true, |b| margin > b.margin) {
            best = Some(FarkasCertificate { y, margin });
        }
    }
    match best {
        Some(cert) if cert.margin > 0.0 => {
            Ok(LpSolution {
                status: Status::Infeasible,
                x: Vec::new(),
                duals: Vec::new(),
                objective: 0.0,
                max_violation: 0.0,
                duality_gap: 0.0,
                iterations: tab.iterations,
                farkas: Some(cert),
            })
        }
        _ => Err(Error::Numerical(
            "phase one ended infeasible but the dual gives no positive margin".into(),
        )),
    }
}
