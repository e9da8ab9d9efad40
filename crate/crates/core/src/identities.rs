//! Operational identities: linear dependences among states or effects, and
//! dependences that appear only after tracing out a subsystem.
//!
//! Identities are reported as a canonical basis of the coefficient null
//! space: reduced row-echelon form with columns ordered by label, each row
//! rescaled so its positive coefficients sum to one (mixture form, e.g.
//! `½ s₁ + ½ s₂ − ½ s₃ − ½ s₄ = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment::{index_by_label, Fragment, Marginalizer, Side};
use crate::lincone::{max_abs, null_space, rank, Matrix, DEFAULT_RANK_TOL};

/// Label standing for the unit effect in effect-side identities.
pub const UNIT_LABEL: &str = "u";

const COEFF_ZERO: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalIdentity {
    pub side: Side,
    pub terms: Vec<Term>,
    /// Subsystem kept when the coefficients act on partial-traced vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_subsystem: Option<String>,
    /// Achieved `‖Σ α v‖∞`.
    #[serde(default)]
    pub residual: f64,
}

impl OperationalIdentity {
    /// Build an identity; needs at least two nonzero coefficients.
    pub fn new(side: Side, terms: Vec<Term>, keep_subsystem: Option<String>) -> Result<Self> {
        let nonzero = terms
            .iter()
            .filter(|t| t.coefficient.abs() > COEFF_ZERO)
            .count();
        if terms.iter().any(|t| !t.coefficient.is_finite()) {
            return Err(Error::NonFinite("identity coefficient".into()));
        }
        if nonzero < 2 {
            return Err(Error::Invalid(format!(
                "an operational identity needs two nonzero coefficients, got {nonzero}"
            )));
        }
        Ok(OperationalIdentity {
            side,
            terms,
            keep_subsystem,
            residual: 0.0,
        })
    }

    pub fn from_pairs(side: Side, pairs: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            side,
            pairs
                .iter()
                .map(|&(l, c)| Term {
                    label: l.to_string(),
                    coefficient: c,
                })
                .collect(),
            None,
        )
    }

    pub fn coefficient(&self, label: &str) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.label == label)
            .map(|t| t.coefficient)
            .sum()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }
}

pub fn identities_from_json(text: &str) -> Result<Vec<OperationalIdentity>> {
    let ids: Vec<OperationalIdentity> = serde_json::from_str(text)?;
    for id in &ids {
        OperationalIdentity::new(id.side, id.terms.clone(), id.keep_subsystem.clone())?;
    }
    Ok(ids)
}

/// Labeled vectors of one side; effect sides include the unit effect.
fn side_vectors(f: &Fragment, side: Side) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = f
        .vectors(side)
        .iter()
        .map(|v| (v.label.clone(), v.vector.clone()))
        .collect();
    if side == Side::Effects {
        out.push((UNIT_LABEL.to_string(), f.unit_effect.clone()));
    }
    out
}

/// Canonical identity basis for labeled vectors.
fn identities_of(
    side: Side,
    labeled: &[(String, Vec<f64>)],
    dim: usize,
    tol: f64,
    keep: Option<&str>,
) -> Result<Vec<OperationalIdentity>> {
    let n = labeled.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "need at least two {side} to look for identities, got {n}"
        )));
    }
    // columns are the vectors: coefficient space is R^n
    let m = Matrix::from_fn(dim, n, |r, c| labeled[c].1[r]);
    let basis = null_space(&m, tol)?;
    if basis.is_empty() {
        return Ok(Vec::new());
    }

    // Gauss-Jordan on the basis rows with columns in label order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labeled[a].0.cmp(&labeled[b].0).then(a.cmp(&b)));
    let mut rows = basis;
    let r = rows.len();
    let mut pivot_row = 0;
    for &col in &order {
        if pivot_row == r {
            break;
        }
        let (best, val) = (pivot_row..r)
            .map(|i| (i, rows[i][col].abs()))
            .fold((pivot_row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= 1e-9 {
            continue;
        }
        rows.swap(pivot_row, best);
        let p = rows[pivot_row][col];
        rows[pivot_row].iter_mut().for_each(|x| *x /= p);
        for i in 0..r {
            if i != pivot_row {
                let f = rows[i][col];
                if f != 0.0 {
                    let src = rows[pivot_row].clone();
                    rows[i].iter_mut().zip(&src).for_each(|(x, s)| *x -= f * s);
                }
            }
        }
        pivot_row += 1;
    }

    let mut out = Vec::with_capacity(r);
    for mut row in rows {
        row.iter_mut().for_each(|x| {
            if x.abs() < COEFF_ZERO {
                *x = 0.0
            }
        });
        let positive: f64 = row.iter().filter(|x| **x > 0.0).sum();
        let scale = if positive > 0.0 {
            positive
        } else {
            -row.iter().sum::<f64>()
        };
        if scale == 0.0 {
            continue;
        }
        row.iter_mut().for_each(|x| *x /= scale);
        let terms: Vec<Term> = row
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > COEFF_ZERO)
            .map(|(i, &c)| Term {
                label: labeled[i].0.clone(),
                coefficient: c,
            })
            .collect();
        if terms.len() < 2 {
            return Err(Error::Degenerate(format!(
                "{side} vector `{}` is zero",
                terms.first().map(|t| t.label.as_str()).unwrap_or("?")
            )));
        }
        let mut sum = vec![0.0; dim];
        for (c, (_, v)) in row.iter().zip(labeled) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += c * x);
        }
        let mut id = OperationalIdentity::new(side, terms, keep.map(str::to_string))?;
        id.residual = max_abs(&sum);
        out.push(id);
    }
    Ok(out)
}

/// Basis of the linear dependences among the states (or the effects together
/// with the unit effect, labeled [`UNIT_LABEL`]) of a fragment.
pub fn find_identities(f: &Fragment, side: Side, tol: f64) -> Result<Vec<OperationalIdentity>> {
    crate::fragment::require_valid(f)?;
    let labeled = side_vectors(f, side);
    let available = f.vectors(side).len();
    if available < 2 {
        return Err(Error::Invalid(format!(
            "need at least two {side} to look for identities, got {available}"
        )));
    }
    identities_of(side, &labeled, f.dimension, tol, None)
}

/// Number of identities [`find_identities`] must return.
pub fn expected_identity_count(f: &Fragment, side: Side, tol: f64) -> usize {
    let labeled = side_vectors(f, side);
    let m = Matrix::from_fn(f.dimension, labeled.len(), |r, c| labeled[c].1[r]);
    labeled.len() - rank(&m, tol)
}

/// Identities among the states after tracing out everything but `keep`.
pub fn induced_marginal_identities(f: &Fragment, keep: &str) -> Result<Vec<OperationalIdentity>> {
    induced_marginal_identities_tol(f, keep, DEFAULT_RANK_TOL)
}

pub fn induced_marginal_identities_tol(
    f: &Fragment,
    keep: &str,
    tol: f64,
) -> Result<Vec<OperationalIdentity>> {
    let marg = Marginalizer::new(f, keep)?;
    f.check_well_formed()?;
    let labeled: Vec<(String, Vec<f64>)> = f
        .states
        .iter()
        .map(|s| (s.label.clone(), marg.trace_state(&s.vector)))
        .collect();
    let dim = labeled.first().map_or(0, |(_, v)| v.len());
    identities_of(Side::States, &labeled, dim, tol, Some(keep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluate `‖Σ α v‖∞` for an identity on a fragment.
pub fn check_identity(f: &Fragment, id: &OperationalIdentity, tol: f64) -> Result<ResidualReport> {
    f.check_well_formed()?;
    let vectors = index_by_label(f.vectors(id.side));
    let marg = match &id.keep_subsystem {
        Some(keep) => Some(Marginalizer::new(f, keep)?),
        None => None,
    };
    let mut sum: Option<Vec<f64>> = None;
    for t in &id.terms {
        let v: Vec<f64> = match vectors.get(t.label.as_str()) {
            Some(v) => v.to_vec(),
            None if id.side == Side::Effects && t.label == UNIT_LABEL => f.unit_effect.clone(),
            None => return Err(Error::UnknownLabel(t.label.clone())),
        };
        let v = match &marg {
            Some(m) => m.trace_state(&v),
            None => v,
        };
        let acc = sum.get_or_insert_with(|| vec![0.0; v.len()]);
        acc.iter_mut().zip(&v).for_each(|(a, x)| *a += t.coefficient * x);
    }
    let residual = sum.as_deref().map_or(0.0, max_abs);
    Ok(ResidualReport {
        residual,
        tolerance: tol,
        passed: residual <= tol,
    })
}
