//! Simplex-embeddability of accessible fragments, explicit ontological
//! models from feasible decompositions, and depolarizing robustness.
//!
//! A fragment embeds in a simplex iff the identity on its accessible space
//! decomposes as `Σ β_ij d_j h_iᵀ` with `β ≥ 0`, where `h_i` are extreme rays
//! of the dual of the state cone and `d_j` extreme rays of the dual of the
//! effect cone (effects, unit, and complements).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment::{require_valid, Fragment, GptVector, Measurement, StatisticsTable};
use crate::identities::{OperationalIdentity, UNIT_LABEL};
use crate::lincone::{coordinates, dot, dual_cone, max_abs, project_onto_basis, span_basis};
use crate::ncpoly::NoncontextualityInequality;
use crate::optim::{self, LinearProgram, Relation, Sense, Status};

/// Tolerance for preserved probabilities and span decisions.
pub const ACCESS_TOL: f64 = 1e-9;
/// Bisection resolution on the depolarizing weight.
pub const BISECTION_TOL: f64 = 1e-6;
/// Largest allowed `‖Σ β d hᵀ − target‖∞`.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Tolerance for ontological model invariants.
pub const MODEL_TOL: f64 = 1e-7;

const SUPPORT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessibleFragment {
    /// Name of the fragment this was built from.
    pub source: String,
    pub dimension: usize,
    /// Orthonormal basis of the accessible subspace, in original coordinates.
    pub basis: Vec<Vec<f64>>,
    pub states: Vec<GptVector>,
    pub effects: Vec<GptVector>,
    pub unit_effect: Vec<f64>,
    pub measurements: Vec<Measurement>,
    /// Labels of complement effects added for closure.
    pub added_complements: Vec<String>,
}

impl AccessibleFragment {
    pub fn state_vectors(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.vector.clone()).collect()
    }

    /// Effects followed by the unit effect.
    pub fn effect_generators(&self) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = self.effects.iter().map(|e| e.vector.clone()).collect();
        g.push(self.unit_effect.clone());
        g
    }

    /// Uniform average of the states.
    pub fn state_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dimension];
        for s in &self.states {
            m.iter_mut().zip(&s.vector).for_each(|(a, v)| *a += v);
        }
        let n = self.states.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Copy with every state replaced by `(1−r) s + r m`.
    pub fn depolarized(&self, r: f64) -> AccessibleFragment {
        let m = self.state_mean();
        let mut out = self.clone();
        for s in &mut out.states {
            for (v, c) in s.vector.iter_mut().zip(&m) {
                *v = (1.0 - r) * *v + r * c;
            }
        }
        out
    }
}

/// Restrict a fragment to the subspace its states and effects mutually span.
pub fn accessibilize(f: &Fragment) -> Result<AccessibleFragment> {
    require_valid(f)?;
    f.check_well_formed()?;
    let d = f.dimension;
    let mut states: Vec<Vec<f64>> = f.states.iter().map(|s| s.vector.clone()).collect();
    let mut effects: Vec<Vec<f64>> = f.effects.iter().map(|e| e.vector.clone()).collect();
    effects.push(f.unit_effect.clone());

    let mut basis = span_basis(&states, d, ACCESS_TOL);
    let mut prev_dim = usize::MAX;
    for _ in 0..=d + 1 {
        if basis.is_empty() {
            return Err(Error::Degenerate("states span only the zero vector".into()));
        }
        effects = effects
            .iter()
            .map(|e| project_onto_basis(&basis, e))
            .collect();
        let ebasis = span_basis(&effects, d, ACCESS_TOL);
        states = states
            .iter()
            .map(|s| project_onto_basis(&ebasis, s))
            .collect();
        basis = span_basis(&states, d, ACCESS_TOL);
        if basis.len() == prev_dim && ebasis.len() == basis.len() {
            break;
        }
        prev_dim = basis.len();
    }
    if basis.is_empty() {
        return Err(Error::Degenerate("states span only the zero vector".into()));
    }
    let k = basis.len();

    let mut acc_states: Vec<GptVector> = f
        .states
        .iter()
        .zip(&states)
        .map(|(s, v)| GptVector::new(s.label.clone(), coordinates(&basis, v)))
        .collect();
    let unit = coordinates(&basis, effects.last().expect("unit present"));
    let mut acc_effects: Vec<GptVector> = f
        .effects
        .iter()
        .zip(&effects)
        .map(|(e, v)| GptVector::new(e.label.clone(), coordinates(&basis, v)))
        .collect();

    // complement closure
    let mut added = Vec::new();
    let originals = acc_effects.clone();
    for e in &originals {
        let comp: Vec<f64> = unit.iter().zip(&e.vector).map(|(u, v)| u - v).collect();
        let present = acc_effects
            .iter()
            .any(|o| max_abs(&sub(&o.vector, &comp)) <= ACCESS_TOL);
        if !present {
            let mut label = format!("u-{}", e.label);
            while acc_effects.iter().any(|o| o.label == label) {
                label.push('\'');
            }
            added.push(label.clone());
            acc_effects.push(GptVector::new(label, comp));
        }
    }

    // probabilities must survive the projection
    for (s, sa) in f.states.iter().zip(&acc_states) {
        for (e, ea) in f.effects.iter().zip(&acc_effects) {
            let err = (dot(&e.vector, &s.vector) - dot(&ea.vector, &sa.vector)).abs();
            if err > 1e-7 {
                return Err(Error::Numerical(format!(
                    "projection changed p({}|{}) by {err:.3e}",
                    e.label, s.label
                )));
            }
        }
    }
    for s in acc_states.iter_mut() {
        flush(&mut s.vector);
    }
    for e in acc_effects.iter_mut() {
        flush(&mut e.vector);
    }
    let mut unit = unit;
    flush(&mut unit);

    Ok(AccessibleFragment {
        source: f.name.clone(),
        dimension: k,
        basis,
        states: acc_states,
        effects: acc_effects,
        unit_effect: unit,
        measurements: f.measurements.clone(),
        added_complements: added,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn flush(v: &mut [f64]) {
    v.iter_mut().for_each(|x| {
        if x.abs() < 1e-15 {
            *x = 0.0
        }
    });
}

/// Nonnegative decomposition `Σ β_ij d_j h_iᵀ = target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCertificate {
    /// Sparse `(i, j, β_ij)` triplets over `(h_i, d_j)` pairs.
    pub beta: Vec<(usize, usize, f64)>,
    pub h_rays: Vec<Vec<f64>>,
    pub d_rays: Vec<Vec<f64>>,
    pub residual: f64,
    /// Decomposed matrix when it is not the identity (robustness runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Vec<f64>>>,
}

impl EmbeddingCertificate {
    /// `Σ β_ij d_j h_iᵀ` as a row-major `k×k` matrix.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let k = self.h_rays.first().map_or(0, Vec::len);
        let mut m = vec![vec![0.0; k]; k];
        for &(i, j, b) in &self.beta {
            let (h, d) = (&self.h_rays[i], &self.d_rays[j]);
            for a in 0..k {
                for c in 0..k {
                    m[a][c] += b * d[a] * h[c];
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonEmbeddingCertificate {
    /// Row-major `k×k` matrix `Y` with `d_jᵀ Y h_i ≤ 0` for all pairs and
    /// `tr Y > 0`.
    pub farkas: Vec<f64>,
    pub margin: f64,
    pub h_rays: Vec<Vec<f64>>,
    pub d_rays: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_inequality: Option<NoncontextualityInequality>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Embeddable(EmbeddingCertificate),
    NotEmbeddable(NonEmbeddingCertificate),
}

impl Verdict {
    pub fn is_embeddable(&self) -> bool {
        matches!(self, Verdict::Embeddable(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Embeddable(_) => "embeddable",
            Verdict::NotEmbeddable(_) => "not_embeddable",
        }
    }
}

struct Rays {
    h: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn rays(af: &AccessibleFragment) -> Result<Rays> {
    if af.states.is_empty() {
        return Err(Error::Invalid("fragment has no states".into()));
    }
    let h = dual_cone(&af.state_vectors())?.generators;
    let d = dual_cone(&af.effect_generators())?.generators;
    if h.iter().chain(&d).any(|r| r.len() != af.dimension) {
        return Err(Error::Numerical("dual rays left the accessible space".into()));
    }
    Ok(Rays { h, d })
}

/// `k²` equality rows `Σ β_ij d_j[a] h_i[c] (+ r·extra[a][c]) = target[a][c]`.
fn decomposition_lp(rays: &Rays, k: usize, target: &[Vec<f64>]) -> LinearProgram {
    let (nh, nd) = (rays.h.len(), rays.d.len());
    let mut lp = LinearProgram::new(nh * nd);
    for a in 0..k {
        for c in 0..k {
            let mut coeffs = Vec::new();
            for i in 0..nh {
                for j in 0..nd {
                    let v = rays.d[j][a] * rays.h[i][c];
                    if v != 0.0 {
                        coeffs.push((i * nd + j, v));
                    }
                }
            }
            lp.add(coeffs, Relation::Eq, target[a][c]);
        }
    }
    lp
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|a| (0..k).map(|c| if a == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn certificate_from(
    x: &[f64],
    rays: &Rays,
    target: &[Vec<f64>],
    keep_target: bool,
) -> EmbeddingCertificate {
    let nd = rays.d.len();
    let beta: Vec<(usize, usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > SUPPORT_TOL)
        .map(|(idx, &v)| (idx / nd, idx % nd, v))
        .collect();
    let mut cert = EmbeddingCertificate {
        beta,
        h_rays: rays.h.clone(),
        d_rays: rays.d.clone(),
        residual: 0.0,
        target: keep_target.then(|| target.to_vec()),
    };
    let rec = cert.reconstruct();
    cert.residual = rec
        .iter()
        .zip(target)
        .flat_map(|(r, t)| r.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    cert
}

/// Decide whether `af` embeds in a simplex.
pub fn test_embeddability(af: &AccessibleFragment) -> Result<Verdict> {
    let rays = rays(af)?;
    let k = af.dimension;
    let target = identity(k);
    let lp = decomposition_lp(&rays, k, &target);
    let sol = optim::solve(&lp)?;
    match sol.status {
        Status::Optimal => {
            let cert = certificate_from(&sol.x, &rays, &target, false);
            if cert.residual > RESIDUAL_TOL {
                return Err(Error::Numerical(format!(
                    "decomposition residual {:.3e}",
                    cert.residual
                )));
            }
            Ok(Verdict::Embeddable(cert))
        }
        Status::Infeasible => {
            let f = sol.farkas.expect("infeasible LPs carry a certificate");
            Ok(Verdict::NotEmbeddable(NonEmbeddingCertificate {
                farkas: f.y,
                margin: f.margin,
                h_rays: rays.h,
                d_rays: rays.d,
                violated_inequality: None,
            }))
        }
        Status::Unbounded => Err(Error::Lp("feasibility problem reported unbounded".into())),
    }
}

/// Finite ontological model: epistemic states `μ_x(λ)` and response
/// functions `ξ_e(λ)` over labeled effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OntologicalModel {
    pub ontic_states: Vec<String>,
    pub preparations: Vec<String>,
    /// `mu[x][λ]`
    pub mu: Vec<Vec<f64>>,
    pub effects: Vec<String>,
    /// `xi[e][λ]`
    pub xi: Vec<Vec<f64>>,
    pub measurements: Vec<Measurement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub min_mu: f64,
    pub max_mu_normalization_error: f64,
    pub xi_in_unit_interval: bool,
    pub max_xi_normalization_error: f64,
    pub max_reproduction_error: f64,
    pub max_state_identity_error: f64,
    pub max_effect_identity_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OntologicalModel {
    fn effect_index(&self) -> BTreeMap<&str, usize> {
        self.effects
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect()
    }

    /// `Σ_λ μ_x(λ) ξ_e(λ)`.
    pub fn probability(&self, x: usize, e: usize) -> f64 {
        self.mu[x].iter().zip(&self.xi[e]).map(|(m, k)| m * k).sum()
    }

    /// Verify every invariant against `stats` and the given identities.
    pub fn check(
        &self,
        stats: &StatisticsTable,
        state_ids: &[OperationalIdentity],
        effect_ids: &[OperationalIdentity],
        tol: f64,
    ) -> Result<ModelCheck> {
        let nl = self.ontic_states.len();
        if self.mu.len() != self.preparations.len()
            || self.xi.len() != self.effects.len()
            || self.mu.iter().chain(&self.xi).any(|r| r.len() != nl)
        {
            return Err(Error::Dimension("model tables disagree with Λ".into()));
        }
        let eidx = self.effect_index();
        let pidx: BTreeMap<&str, usize> = self
            .preparations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let min_mu = self.mu.iter().flatten().fold(f64::INFINITY, |a, &v| a.min(v));
        let min_mu = if min_mu.is_finite() { min_mu } else { 0.0 };
        let max_mu_norm = self
            .mu
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        let xi_ok = self.xi.iter().flatten().all(|v| (0.0..=1.0).contains(v));
        let mut max_xi_norm: f64 = 0.0;
        for m in &self.measurements {
            let idx: Vec<usize> = m
                .effects
                .iter()
                .map(|l| eidx.get(l.as_str()).copied().ok_or_else(|| Error::UnknownLabel(l.clone())))
                .collect::<Result<_>>()?;
            for lam in 0..nl {
                let s: f64 = idx.iter().map(|&e| self.xi[e][lam]).sum();
                max_xi_norm = max_xi_norm.max((s - 1.0).abs());
            }
        }

        let mut max_rep: f64 = 0.0;
        for (x, prep) in stats.preparations.iter().enumerate() {
            let xm = *pidx
                .get(prep.as_str())
                .ok_or_else(|| Error::UnknownLabel(prep.clone()))?;
            for (y, outs) in stats.outcomes.iter().enumerate() {
                for (b, l) in outs.iter().enumerate() {
                    let e = *eidx
                        .get(l.as_str())
                        .ok_or_else(|| Error::UnknownLabel(l.clone()))?;
                    max_rep = max_rep.max((self.probability(xm, e) - stats.p[x][y][b]).abs());
                }
            }
        }

        let mut max_sid: f64 = 0.0;
        for id in state_ids {
            for lam in 0..nl {
                let mut s = 0.0;
                for t in &id.terms {
                    let x = *pidx
                        .get(t.label.as_str())
                        .ok_or_else(|| Error::UnknownLabel(t.label.clone()))?;
                    s += t.coefficient * self.mu[x][lam];
                }
                max_sid = max_sid.max(s.abs());
            }
        }
        let mut max_eid: f64 = 0.0;
        for id in effect_ids {
            for lam in 0..nl {
                let mut s = 0.0;
                for t in &id.terms {
                    let v = match eidx.get(t.label.as_str()) {
                        Some(&e) => self.xi[e][lam],
                        None if t.label == UNIT_LABEL => 1.0,
                        None => return Err(Error::UnknownLabel(t.label.clone())),
                    };
                    s += t.coefficient * v;
                }
                max_eid = max_eid.max(s.abs());
            }
        }

        let passed = min_mu >= 0.0
            && max_mu_norm <= tol
            && xi_ok
            && max_xi_norm <= tol
            && max_rep <= tol
            && max_sid <= tol
            && max_eid <= tol;
        Ok(ModelCheck {
            min_mu,
            max_mu_normalization_error: max_mu_norm,
            xi_in_unit_interval: xi_ok,
            max_xi_normalization_error: max_xi_norm,
            max_reproduction_error: max_rep,
            max_state_identity_error: max_sid,
            max_effect_identity_error: max_eid,
            tolerance: tol,
            passed,
        })
    }
}

/// Read off `μ_x(i,j) = β_ij (u·d_j)(h_i·s_x)` and `ξ_e(i,j) = e·d_j / u·d_j`.
pub fn to_model(cert: &EmbeddingCertificate, af: &AccessibleFragment) -> Result<OntologicalModel> {
    if cert.residual > RESIDUAL_TOL {
        return Err(Error::Invalid(format!(
            "certificate residual {:.3e} exceeds {RESIDUAL_TOL:e}",
            cert.residual
        )));
    }
    if cert.target.is_some() {
        return Err(Error::Invalid(
            "certificate decomposes a depolarized target, not the identity".into(),
        ));
    }
    let u = &af.unit_effect;
    let support: Vec<(usize, usize, f64)> = cert
        .beta
        .iter()
        .copied()
        .filter(|&(_, j, b)| b > SUPPORT_TOL && dot(u, &cert.d_rays[j]) > SUPPORT_TOL)
        .collect();
    let ontic_states = support.iter().map(|&(i, j, _)| format!("h{i}.d{j}")).collect();
    let mu = af
        .states
        .iter()
        .map(|s| {
            support
                .iter()
                .map(|&(i, j, b)| {
                    let v = b * dot(u, &cert.d_rays[j]) * dot(&cert.h_rays[i], &s.vector);
                    v.max(0.0)
                })
                .collect()
        })
        .collect();
    let xi = af
        .effects
        .iter()
        .map(|e| {
            support
                .iter()
                .map(|&(_, j, _)| {
                    let d = &cert.d_rays[j];
                    (dot(&e.vector, d) / dot(u, d)).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(OntologicalModel {
        ontic_states,
        preparations: af.states.iter().map(|s| s.label.clone()).collect(),
        mu,
        effects: af.effects.iter().map(|e| e.label.clone()).collect(),
        xi,
        measurements: af.measurements.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub r_star: f64,
    /// Noise center in accessible coordinates.
    pub noise_center: Vec<f64>,
    pub certificate: EmbeddingCertificate,
}

/// Smallest depolarizing weight `r` such that
/// `Σ β d hᵀ = (1−r) Id + r m uᵀ` has a solution with `β ≥ 0`.
pub fn robustness(af: &AccessibleFragment) -> Result<RobustnessResult> {
    let rays = rays(af)?;
    let k = af.dimension;
    let m = af.state_mean();
    let u = &af.unit_effect;
    let id = identity(k);
    let mut lp = decomposition_lp(&rays, k, &id);
    let r = lp.add_var(0.0, 1.0, 0.0);
    for a in 0..k {
        for c in 0..k {
            // Σβ.. = Id − r (Id − m uᵀ)
            let v = id[a][c] - m[a] * u[c];
            if v != 0.0 {
                lp.constraints[a * k + c].coeffs.push((r, v));
            }
        }
    }
    let mut obj = vec![0.0; lp.num_vars()];
    obj[r] = 1.0;
    lp.set_objective(Sense::Minimize, obj);
    let sol = optim::solve(&lp)?;
    if sol.status != Status::Optimal {
        return Err(Error::Lp(format!(
            "robustness LP ended {:?}; full depolarization should always be feasible",
            sol.status
        )));
    }
    let mut r_star = sol.x[r].clamp(0.0, 1.0);
    if r_star <= optim::LP_TOL {
        r_star = 0.0;
    }
    let target = depolarized_target(k, &m, u, r_star);
    let cert = certificate_from(&sol.x[..r], &rays, &target, r_star > 0.0);
    if cert.residual > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "robustness residual {:.3e}",
            cert.residual
        )));
    }
    Ok(RobustnessResult {
        r_star,
        noise_center: m,
        certificate: cert,
    })
}

fn depolarized_target(k: usize, m: &[f64], u: &[f64], r: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|a| {
            (0..k)
                .map(|c| (1.0 - r) * if a == c { 1.0 } else { 0.0 } + r * m[a] * u[c])
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    pub r_star: f64,
    /// Largest tested weight found not embeddable.
    pub lower: f64,
    /// Smallest tested weight found embeddable.
    pub upper: f64,
    pub steps: usize,
}

/// Robustness by depolarizing the states and re-running the embedding test.
pub fn robustness_by_bisection(af: &AccessibleFragment, tol: f64) -> Result<BisectionResult> {
    if test_embeddability(af)?.is_embeddable() {
        return Ok(BisectionResult {
            r_star: 0.0,
            lower: 0.0,
            upper: 0.0,
            steps: 0,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut steps = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if test_embeddability(&af.depolarized(mid))?.is_embeddable() {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(BisectionResult {
        r_star: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        steps,
    })
}

/// Full analysis of one fragment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub fragment: String,
    pub ambient_dimension: usize,
    pub accessible_dimension: usize,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub r_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<OntologicalModel>,
}

/// Accessibilize, test, extract a model or an inequality, and measure
/// robustness.
pub fn analyze(f: &Fragment) -> Result<Analysis> {
    let af = accessibilize(f)?;
    let mut verdict = test_embeddability(&af)?;
    let rob = robustness(&af)?;
    let model = match &verdict {
        Verdict::Embeddable(cert) => Some(to_model(cert, &af)?),
        Verdict::NotEmbeddable(_) => None,
    };
    if let Verdict::NotEmbeddable(nc) = &mut verdict {
        nc.violated_inequality = crate::ncpoly::inequality_for_fragment(f)?;
    }
    Ok(Analysis {
        fragment: f.name.clone(),
        ambient_dimension: f.dimension,
        accessible_dimension: af.dimension,
        verdict,
        r_star: if model.is_some() { 0.0 } else { rob.r_star },
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::{predict, Side};
    use crate::identities::find_identities;
    use crate::scenarios::{self, NotebookVariant};

    fn ids(f: &Fragment, side: Side) -> Vec<OperationalIdentity> {
        if f.vectors(side).len() < 2 {
            return Vec::new();
        }
        find_identities(f, side, 1e-9).unwrap()
    }

    #[test]
    fn pr_is_already_accessible() {
        let f = scenarios::boxworld_pr();
        let af = accessibilize(&f).unwrap();
        assert_eq!(af.dimension, 3);
        assert!(af.added_complements.is_empty());
        for (s, a) in f.states.iter().zip(&af.states) {
            for (e, b) in f.effects.iter().zip(&af.effects) {
                assert!((dot(&s.vector, &e.vector) - dot(&a.vector, &b.vector)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stabilizer_is_four_dimensional() {
        let af = accessibilize(&scenarios::qubit_stabilizer()).unwrap();
        assert_eq!(af.dimension, 4);
    }

    #[test]
    fn orthogonal_effect_projects_to_zero_probabilities() {
        let mut f = scenarios::simplex(2).unwrap();
        f.dimension = 3;
        f.unit_effect.push(0.0);
        for v in f.states.iter_mut().chain(f.effects.iter_mut()) {
            v.vector.push(0.0);
        }
        f.effects.push(GptVector::new("ghost", vec![0.0, 0.0, 1.0]));
        f.effects.push(GptVector::new("ghost-bar", vec![1.0, 1.0, -1.0]));
        f.measurements
            .push(Measurement::new("g", vec!["ghost".into(), "ghost-bar".into()]));
        let af = accessibilize(&f).unwrap();
        assert_eq!(af.dimension, 2);
        let ghost = af.effects.iter().find(|e| e.label == "ghost").unwrap();
        assert!(max_abs(&ghost.vector) < 1e-12);
    }

    #[test]
    fn mediary_shrinks_to_state_span() {
        let af = accessibilize(&scenarios::boxworld_classical_mediary()).unwrap();
        assert_eq!(af.dimension, 4);
    }

    #[test]
    fn simplex_embeds_with_point_model() {
        let f = scenarios::simplex(3).unwrap();
        let af = accessibilize(&f).unwrap();
        assert_eq!(af.added_complements.len(), 3);
        let v = test_embeddability(&af).unwrap();
        let Verdict::Embeddable(cert) = v else {
            panic!("simplex must embed")
        };
        assert!(cert.residual < 1e-12);
        assert_eq!(cert.beta.len(), 3);
        let model = to_model(&cert, &af).unwrap();
        for row in &model.mu {
            assert_eq!(row.iter().filter(|v| **v > 1e-9).count(), 1);
        }
        for row in &model.xi {
            assert!(row.iter().all(|v| v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12));
        }
        let check = model
            .check(&predict(&f).unwrap(), &[], &ids(&f, Side::Effects), MODEL_TOL)
            .unwrap();
        assert!(check.passed, "{check:?}");
        assert_eq!(robustness(&af).unwrap().r_star, 0.0);
    }

    #[test]
    fn pr_is_not_embeddable_with_valid_farkas() {
        let af = accessibilize(&scenarios::boxworld_pr()).unwrap();
        let Verdict::NotEmbeddable(nc) = test_embeddability(&af).unwrap() else {
            panic!("PR box must not embed")
        };
        assert!(nc.margin > 1e-9);
        let k = 3;
        let tr: f64 = (0..k).map(|a| nc.farkas[a * k + a]).sum();
        assert!(tr > 0.0);
        for h in &nc.h_rays {
            for d in &nc.d_rays {
                let mut v = 0.0;
                for a in 0..k {
                    for c in 0..k {
                        v += d[a] * nc.farkas[a * k + c] * h[c];
                    }
                }
                assert!(v <= 1e-9);
            }
        }
    }

    #[test]
    fn stabilizer_model_reproduces_statistics() {
        let f = scenarios::qubit_stabilizer();
        let af = accessibilize(&f).unwrap();
        let Verdict::Embeddable(cert) = test_embeddability(&af).unwrap() else {
            panic!("stabilizer fragment must embed")
        };
        let model = to_model(&cert, &af).unwrap();
        assert!(model.ontic_states.len() <= 16);
        let check = model
            .check(
                &predict(&f).unwrap(),
                &ids(&f, Side::States),
                &ids(&f, Side::Effects),
                MODEL_TOL,
            )
            .unwrap();
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn pr_robustness_is_one_half() {
        let af = accessibilize(&scenarios::boxworld_pr()).unwrap();
        let r = robustness(&af).unwrap();
        assert!((r.r_star - 0.5).abs() < 1e-9, "{}", r.r_star);
        let b = robustness_by_bisection(&af, BISECTION_TOL).unwrap();
        assert!((b.r_star - r.r_star).abs() < 1e-4);
        assert!(!test_embeddability(&af.depolarized((r.r_star - 1e-4).max(0.0)))
            .unwrap()
            .is_embeddable());
        assert!(test_embeddability(&af.depolarized(r.r_star + 1e-9))
            .unwrap()
            .is_embeddable());
    }

    #[test]
    fn full_depolarization_embeds() {
        let af = accessibilize(&scenarios::boxworld_pr()).unwrap();
        let m = af.state_mean();
        let target = depolarized_target(3, &m, &af.unit_effect, 1.0);
        let rays = rays(&af).unwrap();
        let sol = optim::solve(&decomposition_lp(&rays, 3, &target)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
    }

    #[test]
    fn notebook_variants() {
        // system readouts alone only see the square
        let f = scenarios::lab_notebook(NotebookVariant::ReadoutOnSystem).unwrap();
        let a = analyze(&f).unwrap();
        assert_eq!(a.accessible_dimension, 3);
        assert!(!a.verdict.is_embeddable());
        // pointer readouts make the four independent states accessible
        let f = scenarios::lab_notebook(NotebookVariant::WithPointerReadout).unwrap();
        let a = analyze(&f).unwrap();
        assert_eq!(a.accessible_dimension, 4);
        assert!(a.verdict.is_embeddable());
    }

    #[test]
    fn certificate_json_shapes() {
        let a = analyze(&scenarios::boxworld_pr()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(v["verdict"], "not_embeddable");
        assert!(v["farkas"].is_array());
        assert!(v["violated_inequality"]["coefficients"].is_array());
        let a = analyze(&scenarios::simplex(4).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(v["verdict"], "embeddable");
        assert_eq!(v["r_star"], 0.0);
        assert!(v["beta"][0].is_array());
    }
}
