//! Primal active-set method for small convex QPs
//! `min ½ zᵀHz + gᵀz  s.t.  Az ≤ b`, started from a feasible point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lincone::{least_squares, null_space};

const ACTIVE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QpResult {
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(h * z)) + g.dot(z)
}

/// Step `p` on the null space of the active rows, then multipliers by
/// least squares from `H p + Aᵀλ = -grad`.
fn kkt(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    a: &DMatrix<f64>,
    active: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let n = h.nrows();
    let k = active.len();
    let z = if k == 0 {
        DMatrix::identity(n, n)
    } else {
        let rows = DMatrix::from_fn(k, n, |r, j| {
            let norm = a.row(active[r]).norm().max(f64::MIN_POSITIVE);
            a[(active[r], j)] / norm
        });
        match null_space(&rows, 1e-10) {
            Ok(basis) if !basis.is_empty() => {
                DMatrix::from_fn(n, basis.len(), |i, c| basis[c][i])
            }
            _ => DMatrix::zeros(n, 0),
        }
    };
    let p = if z.ncols() == 0 {
        DVector::zeros(n)
    } else {
        let hr = z.transpose() * h * &z;
        let gr = -(z.transpose() * grad);
        let pz = match hr.clone().cholesky() {
            Some(c) => c.solve(&gr),
            None => least_squares(&hr, &gr, 1e-12).unwrap_or_else(|_| DVector::zeros(z.ncols())),
        };
        &z * pz
    };
    let lambda = if k == 0 {
        DVector::zeros(0)
    } else {
        let at = DMatrix::from_fn(n, k, |j, r| a[(active[r], j)]);
        let rhs = -(grad + h * &p);
        least_squares(&at, &rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(k))
    };
    (p, lambda)
}

/// Minimize from the feasible start `z0`. `h` should be positive
/// semidefinite; a tiny ridge keeps the subproblems nonsingular.
pub fn solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z0: &DVector<f64>,
) -> Result<QpResult> {
    let n = h.nrows();
    if h.ncols() != n || g.len() != n || a.ncols() != n || a.nrows() != b.len() || z0.len() != n {
        return Err(Error::Dimension("QP data shapes disagree".into()));
    }
    let ridge = 1e-12 * (1.0 + h.diagonal().amax());
    let h = h + DMatrix::identity(n, n) * ridge;
    let mut z = z0.clone();
    let slack0 = b - a * &z;
    if slack0.iter().any(|s| *s < -1e-7) {
        return Err(Error::Invalid(format!("QP start point is infeasible by {:e}", -slack0.min())));
    }

    let mut active: Vec<usize> = Vec::new();
    for i in 0..a.nrows() {
        if slack0[i].abs() <= ACTIVE_TOL * (1.0 + b[i].abs()) {
            let mut trial = active.clone();
            trial.push(i);
            let rows = DMatrix::from_fn(trial.len(), n, |r, j| a[(trial[r], j)]);
            if rows.rank(1e-9) == trial.len() {
                active = trial;
            }
        }
    }

    let limit = 50 * (n + a.nrows()) + 100;
    for it in 0..limit {
        let grad = &h * &z + g;
        let (p, lambda) = kkt(&h, &grad, a, &active);
        let gain = -(grad.dot(&p) + 0.5 * p.dot(&(&h * &p)));
        let obj = objective(&h, g, &z);
        if p.amax() <= STEP_TOL * (1.0 + z.amax()) || gain <= 1e-13 * (1.0 + obj.abs()) {
            // multipliers of ≤ rows must be nonnegative; drop the lowest
            // index first to avoid cycling at degenerate vertices
            let scale = 1e-9 * (1.0 + grad.amax());
            let worst = lambda
                .iter()
                .enumerate()
                .filter(|(r, l)| **l < -scale * (1.0 + a.row(active[*r]).norm()))
                .min_by_key(|(r, _)| active[*r]);
            match worst {
                None => {
                    return Ok(QpResult {
                        objective: objective(&h, g, &z),
                        z,
                        iterations: it,
                    })
                }
                Some((r, _)) => {
                    active.remove(r);
                }
            }
            continue;
        }
        let ap = a * &p;
        let slack = b - a * &z;
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..a.nrows() {
            if active.contains(&i) || ap[i] <= 1e-14 {
                continue;
            }
            let t = slack[i].max(0.0) / ap[i];
            if t < alpha {
                alpha = t;
                blocking = Some(i);
            }
        }
        z += &p * alpha;
        if let Some(i) = blocking {
            active.push(i);
        }
    }
    Err(Error::Numerical(format!(
        "active-set QP hit its iteration limit of {limit}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_projection() {
        // min (x-2)^2 + (y+1)^2 on [0,1]^2 -> (1,0)
        let h = DMatrix::identity(2, 2) * 2.0;
        let g = DVector::from_vec(vec![-4.0, 2.0]);
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let r = solve(&h, &g, &a, &b, &DVector::from_vec(vec![0.5, 0.5])).unwrap();
        assert!((r.z[0] - 1.0).abs() < 1e-9);
        assert!(r.z[1].abs() < 1e-9);
    }

    #[test]
    fn interior_optimum() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-0.3, -0.2]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0]);
        let r = solve(&h, &g, &a, &b, &DVector::zeros(2)).unwrap();
        assert!((r.z[0] - 0.3).abs() < 1e-9 && (r.z[1] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn singular_hessian() {
        // min (x+y-3)^2 subject to x <= 1, y <= 1 -> x = y = 1
        let h = DMatrix::from_element(2, 2, 2.0);
        let g = DVector::from_vec(vec![-6.0, -6.0]);
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let r = solve(&h, &g, &a, &b, &DVector::zeros(2)).unwrap();
        assert!((r.z[0] - 1.0).abs() < 1e-8 && (r.z[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_infeasible_start() {
        let h = DMatrix::identity(1, 1);
        let a = DMatrix::identity(1, 1);
        let b = DVector::from_vec(vec![0.0]);
        assert!(solve(&h, &DVector::zeros(1), &a, &b, &DVector::from_vec(vec![1.0])).is_err());
    }
}
