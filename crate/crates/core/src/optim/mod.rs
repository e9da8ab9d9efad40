//! Linear programs with mandatory dual certificates, plus a small
//! active-set quadratic solver used by tomography.

mod simplex;
pub mod qp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal/dual feasibility tolerance.
pub const LP_TOL: f64 = 1e-8;
pub const MAX_LP_VARIABLES: usize = 20_000;
pub const MAX_LP_CONSTRAINTS: usize = 20_000;
/// Environment variable enabling an iteration log on standard error.
pub const TRACE_ENV: &str = "NCTK_LP_TRACE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
    Feasibility,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// Sparse row `Σ coeffs · x  (relation)  rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables, all `≥ 0`, zero objective.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            sense: Sense::Feasibility,
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Append a variable and return its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn set_objective(&mut self, sense: Sense, c: Vec<f64>) {
        self.sense = sense;
        self.objective = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Append a constraint and return its index.
    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn add_dense(&mut self, row: &[f64], relation: Relation, rhs: f64) -> usize {
        let coeffs = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, &v)| (j, v))
            .collect();
        self.add(coeffs, relation, rhs)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if n > MAX_LP_VARIABLES {
            return Err(Error::Limit {
                what: "LP variables",
                value: n,
                limit: MAX_LP_VARIABLES,
            });
        }
        if self.constraints.len() > MAX_LP_CONSTRAINTS {
            return Err(Error::Limit {
                what: "LP constraints",
                value: self.constraints.len(),
                limit: MAX_LP_CONSTRAINTS,
            });
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("bound vectors must match the variable count".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP objective".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Invalid(format!("bad bounds on variable {j}")));
            }
            if l > u {
                return Err(Error::Invalid(format!(
                    "variable {j} has lower bound {l} above upper bound {u}"
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::NonFinite(format!("rhs of LP row {i}")));
            }
            for &(j, v) in &c.coeffs {
                if j >= n {
                    return Err(Error::Dimension(format!(
                        "LP row {i} references variable {j} of {n}"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("LP row {i}")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of constraints and bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Multipliers proving infeasibility.
///
/// Every inequality is read in `≥` form (a `≤` row is negated), so the
/// multipliers of inequality rows are nonnegative and those of equality rows
/// are free. With `g = Σ yᵢ aᵢ` and `β = Σ yᵢ bᵢ` in that form, every feasible
/// point would satisfy `g·x ≥ β`; the certificate shows `max g·x < β` over
/// the variable bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub y: Vec<f64>,
    pub margin: f64,
}

impl FarkasCertificate {
    /// Recompute the contradiction margin against `lp`.
    pub fn margin_for(&self, lp: &LinearProgram) -> f64 {
        farkas_margin(lp, &self.y)
    }

    pub fn verify(&self, lp: &LinearProgram, min_margin: f64) -> bool {
        if self.y.len() != lp.constraints.len() {
            return false;
        }
        let signs_ok = lp
            .constraints
            .iter()
            .zip(&self.y)
            .all(|(c, &y)| c.relation == Relation::Eq || y >= -1e-12);
        signs_ok && self.margin_for(lp) >= min_margin
    }
}

/// Multiplier-weighted row combination `(g, β)` in `≥` form.
pub fn combine_rows(lp: &LinearProgram, y: &[f64]) -> (Vec<f64>, f64) {
    let mut g = vec![0.0; lp.num_vars()];
    let mut beta = 0.0;
    for (c, &yi) in lp.constraints.iter().zip(y) {
        let s = if c.relation == Relation::Le { -yi } else { yi };
        if s == 0.0 {
            continue;
        }
        for &(j, v) in &c.coeffs {
            g[j] += s * v;
        }
        beta += s * c.rhs;
    }
    (g, beta)
}

fn farkas_margin(lp: &LinearProgram, y: &[f64]) -> f64 {
    let (g, beta) = combine_rows(lp, y);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut best = 0.0;
    for (j, &gj) in g.iter().enumerate() {
        // coefficients at roundoff level carry no information
        if gj.abs() <= 1e-11 * scale {
            continue;
        }
        let bound = if gj > 0.0 { lp.upper[j] } else { lp.lower[j] };
        if !bound.is_finite() {
            return f64::NEG_INFINITY;
        }
        best += gj * bound;
    }
    (beta - best) / scale
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: Status,
    /// Primal point (empty unless optimal).
    pub x: Vec<f64>,
    /// Shadow prices `∂objective/∂rhs` per constraint (empty unless optimal).
    pub duals: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub farkas: Option<FarkasCertificate>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solve `lp` with a deterministic two-phase simplex method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    simplex::solve(lp)
}
