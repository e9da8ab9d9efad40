//! Dense linear algebra and polyhedral cone geometry.
//!
//! Rank decisions threshold singular values relative to the largest one.
//! Cone conversion uses the double-description method, always run inside the
//! linear span of the input so lower-dimensional cones stay pointed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Largest cone dimension accepted by [`dual_cone`] and [`extreme_rays`].
pub const MAX_CONE_DIM: usize = 16;
/// Largest number of generators accepted by [`dual_cone`].
pub const MAX_CONE_GENERATORS: usize = 128;
/// Cap on the number of intermediate rays during double description.
pub const MAX_DD_RAYS: usize = 20_000;

pub type Matrix = DMatrix<f64>;

/// Stack equally long vectors as the rows of a matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> Matrix {
    Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Full singular value decomposition `m = U Σ Vᵀ`, singular values in
/// nonincreasing order. Computed with faer: nalgebra 0.35 returns wrong
/// factors for some rank-deficient inputs.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × rows`
    pub u: Matrix,
    /// `min(rows, cols)` values.
    pub singular_values: Vec<f64>,
    /// `cols × cols`
    pub v_t: Matrix,
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    check_finite(m, "matrix")?;
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            u: Matrix::identity(rows, rows),
            singular_values: Vec::new(),
            v_t: Matrix::identity(cols, cols),
        });
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let d = fm
        .svd()
        .map_err(|e| Error::Numerical(format!("singular value decomposition: {e:?}")))?;
    let (u, s, v) = (d.U(), d.S(), d.V());
    Ok(Svd {
        u: Matrix::from_fn(rows, rows, |i, j| u[(i, j)]),
        singular_values: (0..rows.min(cols)).map(|i| s[i]).collect(),
        v_t: Matrix::from_fn(cols, cols, |i, j| v[(j, i)]),
    })
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.singular_values)
}

/// Minimum-norm least-squares solution of `a x = b`, dropping singular
/// values at or below `tol · σ_max`.
pub fn least_squares(a: &Matrix, b: &nalgebra::DVector<f64>, tol: f64) -> Result<nalgebra::DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension("right-hand side length differs from row count".into()));
    }
    let d = svd(a)?;
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    let mut x = nalgebra::DVector::zeros(a.ncols());
    for (i, &s) in d.singular_values.iter().enumerate() {
        if s <= tol * smax || s == 0.0 {
            continue;
        }
        let c = d.u.column(i).dot(b) / s;
        x += d.v_t.row(i).transpose() * c;
    }
    Ok(x)
}

/// Right singular vectors with singular values padded by zeros to `cols`.
fn full_svd(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = svd(m)?;
    let mut sv = d.singular_values;
    sv.resize(m.ncols(), 0.0);
    Ok((sv, d.v_t))
}

/// Orthonormal basis of `{v : m v = 0}`.
///
/// Singular values at or below `tol * sigma_max` count as zero. An all-zero
/// matrix has the whole space as its kernel.
pub fn null_space(m: &Matrix, tol: f64) -> Result<Vec<Vec<f64>>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (sv, v_t) = full_svd(m)?;
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cutoff = tol * smax;
    let mut basis = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if smax == 0.0 || s <= cutoff {
            basis.push(v_t.row(i).iter().copied().collect());
        }
    }
    Ok(basis)
}

/// Numerical rank at relative tolerance `tol`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let Ok(sv) = singular_values(m) else {
        return 0;
    };
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Orthonormal basis of the span of `vectors` (row space of the stack).
pub fn span_basis(vectors: &[Vec<f64>], dim: usize, tol: f64) -> Vec<Vec<f64>> {
    if vectors.is_empty() || dim == 0 {
        return Vec::new();
    }
    let m = rows_to_matrix(vectors, dim);
    let Ok((sv, v_t)) = full_svd(&m) else {
        return Vec::new();
    };
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol * smax).collect();
    // order by decreasing singular value, ties by index, for reproducibility
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    idx.into_iter()
        .map(|i| v_t.row(i).iter().copied().collect())
        .collect()
}

/// Project `v` onto the span of an orthonormal basis.
pub fn project_onto_basis(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for q in basis {
        let c = dot(q, v);
        for (o, qi) in out.iter_mut().zip(q) {
            *o += c * qi;
        }
    }
    out
}

/// Coordinates of `v` in an orthonormal basis.
pub fn coordinates(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    basis.iter().map(|q| dot(q, v)).collect()
}

/// Orthogonal projection of `target` onto `span(vectors)`.
///
/// An empty list projects everything to zero.
pub fn project_onto_span(vectors: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let dim = target.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Dimension(format!(
            "span vector has length {}, target has {dim}",
            bad.len()
        )));
    }
    let basis = span_basis(vectors, dim, DEFAULT_RANK_TOL);
    Ok(project_onto_basis(&basis, target))
}

/// Generator (V) and facet (H) description of a polyhedral cone.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConeDescription {
    pub dimension: usize,
    /// Extreme rays.
    pub generators: Vec<Vec<f64>>,
    /// Normals `h` with `h . v >= 0` on the cone.
    pub facets: Vec<Vec<f64>>,
    pub canonical_order: bool,
}

impl ConeDescription {
    /// Largest violation of `h . g >= -tol |h| |g|` over all facet/generator pairs.
    pub fn max_incidence_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for h in &self.facets {
            for g in &self.generators {
                let scale = norm(h) * norm(g);
                if scale > 0.0 {
                    worst = worst.max(-dot(h, g) / scale);
                }
            }
        }
        worst
    }
}

/// Round a unit vector to a grid so near-equal rays compare equal.
fn sort_key(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Scale to unit norm, flush tiny entries, sort lexicographically and
/// merge duplicates.
pub fn canonicalize_rays(rays: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = rays
        .into_iter()
        .filter_map(|mut r| {
            let n = norm(&r);
            if n == 0.0 || !n.is_finite() {
                return None;
            }
            for x in r.iter_mut() {
                *x /= n;
                if x.abs() < 1e-13 {
                    *x = 0.0;
                }
            }
            Some(r)
        })
        .collect();
    out.sort_by_key(|a| sort_key(a));
    out.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-8));
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(bits: usize) -> Self {
        BitSet(vec![0; bits.div_ceil(64).max(1)])
    }
    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, other: &BitSet) -> BitSet {
        BitSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn is_subset_of(&self, other: &BitSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
}

struct Ray {
    v: Vec<f64>,
    zeros: BitSet,
}

/// Extreme rays of the pointed cone `{x : a . x >= 0 for every row a}`.
///
/// The rows must span the whole space (pointedness); otherwise the call
/// fails with [`Error::Degenerate`]. Output is canonicalized.
pub fn extreme_rays(rows: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    if dim > MAX_CONE_DIM {
        return Err(Error::Limit {
            what: "cone dimension",
            value: dim,
            limit: MAX_CONE_DIM,
        });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension(format!(
            "constraint of length {} in a {dim}-dimensional cone",
            bad.len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cone constraints".into()));
    }

    // Normalized constraint rows; zero rows are vacuous.
    let cons: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let n = norm(r);
            (n > 0.0).then(|| r.iter().map(|x| x / n).collect())
        })
        .collect();
    let m = cons.len();

    // Greedily pick `dim` linearly independent rows for the initial simplex.
    let mut chosen: Vec<usize> = Vec::new();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for (i, a) in cons.iter().enumerate() {
        let mut r = a.clone();
        for q in &ortho {
            let c = dot(q, &r);
            for (x, qi) in r.iter_mut().zip(q) {
                *x -= c * qi;
            }
        }
        let n = norm(&r);
        if n > 1e-7 {
            chosen.push(i);
            ortho.push(r.into_iter().map(|x| x / n).collect());
            if chosen.len() == dim {
                break;
            }
        }
    }
    if chosen.len() < dim {
        return Err(Error::Degenerate(format!(
            "constraints span {} of {dim} dimensions; cone is not pointed",
            chosen.len()
        )));
    }

    let basis = Matrix::from_fn(dim, dim, |r, c| cons[chosen[r]][c]);
    let inv = basis
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular initial basis in double description".into()))?;
    let mut rays: Vec<Ray> = (0..dim)
        .map(|j| {
            let mut v: Vec<f64> = inv.column(j).iter().copied().collect();
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            let mut zeros = BitSet::new(m);
            for (r, &ci) in chosen.iter().enumerate() {
                if r != j {
                    zeros.insert(ci);
                }
            }
            Ray { v, zeros }
        })
        .collect();

    let zero_tol = 1e-9;
    for (i, a) in cons.iter().enumerate() {
        if chosen.contains(&i) {
            continue;
        }
        let vals: Vec<f64> = rays.iter().map(|r| dot(a, &r.v)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&r| vals[r] > zero_tol).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&r| vals[r] < -zero_tol).collect();
        if neg.is_empty() {
            for (r, ray) in rays.iter_mut().enumerate() {
                if vals[r].abs() <= zero_tol {
                    ray.zeros.insert(i);
                }
            }
            continue;
        }

        let mut fresh: Vec<Ray> = Vec::new();
        for &p in &pos {
            for &n in &neg {
                let common = rays[p].zeros.and(&rays[n].zeros);
                if common.count() + 2 < dim {
                    continue;
                }
                let adjacent = rays.iter().enumerate().all(|(r, ray)| {
                    r == p || r == n || !common.is_subset_of(&ray.zeros)
                });
                if !adjacent {
                    continue;
                }
                let (vp, vn) = (vals[p], vals[n]);
                let mut v: Vec<f64> = rays[n]
                    .v
                    .iter()
                    .zip(&rays[p].v)
                    .map(|(xn, xp)| vp * xn - vn * xp)
                    .collect();
                let nv = norm(&v);
                if nv < 1e-14 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= nv);
                let mut zeros = common;
                zeros.insert(i);
                fresh.push(Ray { v, zeros });
            }
        }

        let mut next: Vec<Ray> = Vec::with_capacity(rays.len() + fresh.len());
        for (r, mut ray) in rays.into_iter().enumerate() {
            if vals[r] < -zero_tol {
                continue;
            }
            if vals[r].abs() <= zero_tol {
                ray.zeros.insert(i);
            }
            next.push(ray);
        }
        next.extend(fresh);
        if next.len() > MAX_DD_RAYS {
            return Err(Error::Limit {
                what: "intermediate rays in double description",
                value: next.len(),
                limit: MAX_DD_RAYS,
            });
        }
        rays = next;
    }

    Ok(canonicalize_rays(rays.into_iter().map(|r| r.v).collect()))
}

/// Dual cone `{w in span(G) : w . g >= 0 for all g}` of the cone generated by
/// `generators`.
///
/// The returned description lists the dual's extreme rays as `generators`
/// and the irredundant input generators as `facets`, both canonicalized.
pub fn dual_cone(generators: &[Vec<f64>]) -> Result<ConeDescription> {
    let first = generators
        .first()
        .ok_or_else(|| Error::Invalid("dual_cone needs at least one generator".into()))?;
    let dim = first.len();
    if dim > MAX_CONE_DIM {
        return Err(Error::Limit {
            what: "cone dimension",
            value: dim,
            limit: MAX_CONE_DIM,
        });
    }
    if generators.len() > MAX_CONE_GENERATORS {
        return Err(Error::Limit {
            what: "cone generators",
            value: generators.len(),
            limit: MAX_CONE_GENERATORS,
        });
    }
    for g in generators {
        if g.len() != dim {
            return Err(Error::Dimension(format!(
                "generator of length {} among length-{dim} generators",
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("cone generator".into()));
        }
        if g.iter().all(|&x| x == 0.0) {
            return Err(Error::Degenerate("all-zero generator".into()));
        }
    }

    let basis = span_basis(generators, dim, DEFAULT_RANK_TOL);
    let k = basis.len();
    let local: Vec<Vec<f64>> = generators.iter().map(|g| coordinates(&basis, g)).collect();
    let local_rays = extreme_rays(&local, k)?;
    let rays: Vec<Vec<f64>> = local_rays
        .iter()
        .map(|c| {
            let mut w = vec![0.0; dim];
            for (coef, q) in c.iter().zip(&basis) {
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi += coef * qi;
                }
            }
            w
        })
        .collect();
    let rays = canonicalize_rays(rays);

    // A generator is extreme when the dual rays vanishing on it span k-1 dims.
    let unit_gens = canonicalize_rays(generators.to_vec());
    let facets = if k <= 1 {
        unit_gens
    } else {
        unit_gens
            .into_iter()
            .filter(|g| {
                let tight: Vec<Vec<f64>> = rays
                    .iter()
                    .filter(|w| dot(w, g).abs() <= 1e-9)
                    .cloned()
                    .collect();
                !tight.is_empty() && rank(&rows_to_matrix(&tight, dim), 1e-9) == k - 1
            })
            .collect()
    };

    Ok(ConeDescription {
        dimension: dim,
        generators: rays,
        facets,
        canonical_order: true,
    })
}
