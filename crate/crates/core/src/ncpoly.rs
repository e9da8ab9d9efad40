//! Noncontextual-model membership for observed statistics and extraction of
//! violated noncontextuality inequalities from LP duals.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::embed::{accessibilize, OntologicalModel};
use crate::error::{Error, Result};
use crate::fragment::{predict, Fragment, Measurement, Side, StatisticsTable};
use crate::identities::{find_identities, OperationalIdentity, UNIT_LABEL};
use crate::lincone::{extreme_rays, least_squares, null_space, rank, Matrix, DEFAULT_RANK_TOL};
use crate::optim::{self, LinearProgram, Relation, Sense, Status};

/// Largest allowed product of outcome counts.
pub const MAX_RESPONSE_PRODUCT: usize = 4096;
/// Tolerance for `evaluate` verdicts.
pub const EVAL_TOL: f64 = 1e-9;

const VERTEX_TOL: f64 = 1e-9;

/// A response function: `ξ` value for every effect label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseVertex {
    pub id: usize,
    pub assignment: BTreeMap<String, f64>,
}

impl ResponseVertex {
    pub fn value(&self, label: &str) -> Option<f64> {
        if label == UNIT_LABEL && !self.assignment.contains_key(label) {
            return Some(1.0);
        }
        self.assignment.get(label).copied()
    }
}

fn clean(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    for anchor in [0.0, 0.5, 1.0] {
        if (v - anchor).abs() < 1e-12 {
            return anchor;
        }
    }
    v
}

/// Vertices of `{ξ ∈ [0,1]^n : Σ_b ξ_{b|y} = 1 ∀y, effect identities}`.
///
/// Variables are the distinct effect labels of `measurements` followed by
/// any further labels the identities mention; the unit label is fixed to 1.
pub fn response_vertices(
    effect_ids: &[OperationalIdentity],
    measurements: &[Measurement],
) -> Result<Vec<ResponseVertex>> {
    let product = measurements
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.effects.len().max(1)))
        .unwrap_or(usize::MAX);
    if product > MAX_RESPONSE_PRODUCT {
        return Err(Error::Limit {
            what: "product of outcome counts",
            value: product,
            limit: MAX_RESPONSE_PRODUCT,
        });
    }
    let mut labels: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut intern = |l: &str, labels: &mut Vec<String>| -> usize {
        *index.entry(l.to_string()).or_insert_with(|| {
            labels.push(l.to_string());
            labels.len() - 1
        })
    };
    let mut norm_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut member_of: Vec<usize> = Vec::new();
    let mut meas_idx: Vec<Vec<usize>> = Vec::new();
    for m in measurements {
        let idx: Vec<usize> = m.effects.iter().map(|l| intern(l, &mut labels)).collect();
        meas_idx.push(idx);
    }
    let n_meas_vars = labels.len();
    for id in effect_ids {
        if id.side != Side::Effects {
            return Err(Error::Invalid("state identity passed as an effect identity".into()));
        }
        for t in &id.terms {
            if t.label != UNIT_LABEL {
                intern(&t.label, &mut labels);
            }
        }
    }
    let n = labels.len();
    let lookup = |l: &str| labels.iter().position(|x| x == l);
    member_of.resize(n, 0);
    for idx in &meas_idx {
        let mut row = vec![0.0; n];
        for &i in idx {
            row[i] += 1.0;
            member_of[i] += 1;
        }
        norm_rows.push((row, 1.0));
    }
    let mut id_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for id in effect_ids {
        let mut row = vec![0.0; n];
        let mut rhs = 0.0;
        for t in &id.terms {
            if t.label == UNIT_LABEL {
                rhs -= t.coefficient;
            } else {
                row[lookup(&t.label).expect("interned")] += t.coefficient;
            }
        }
        id_rows.push((row, rhs));
    }

    let affine = |rows: &[(Vec<f64>, f64)]| -> Matrix {
        Matrix::from_fn(rows.len(), n + 1, |r, c| {
            if c < n {
                rows[r].0[c]
            } else {
                rows[r].1
            }
        })
    };
    let all_rows: Vec<(Vec<f64>, f64)> = norm_rows.iter().chain(&id_rows).cloned().collect();
    let simple = n == n_meas_vars
        && member_of.iter().all(|&c| c == 1)
        && (id_rows.is_empty()
            || rank(&affine(&norm_rows), DEFAULT_RANK_TOL)
                == rank(&affine(&all_rows), DEFAULT_RANK_TOL));

    let mut points: Vec<Vec<f64>> = Vec::new();
    if simple {
        let mut choice = vec![0usize; meas_idx.len()];
        loop {
            let mut v = vec![0.0; n];
            for (y, idx) in meas_idx.iter().enumerate() {
                if let Some(&i) = idx.get(choice[y]) {
                    v[i] = 1.0;
                }
            }
            points.push(v);
            let mut y = 0;
            while y < choice.len() {
                choice[y] += 1;
                if choice[y] < meas_idx[y].len() {
                    break;
                }
                choice[y] = 0;
                y += 1;
            }
            if y == choice.len() {
                break;
            }
        }
    } else {
        points = polytope_vertices(&all_rows, n)?;
    }

    let mut keyed: Vec<(Vec<i64>, Vec<f64>)> = points
        .into_iter()
        .map(|p| {
            let p: Vec<f64> = p.into_iter().map(clean).collect();
            ((p.iter().map(|v| (v * 1e9).round() as i64).collect()), p)
        })
        .collect();
    // deterministic order: descending lexicographic, so deterministic
    // vertices list the first outcome first
    keyed.sort_by(|a, b| b.0.cmp(&a.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    if keyed.is_empty() {
        return Err(Error::Invalid(
            "effect identities admit no response function in [0,1]".into(),
        ));
    }
    Ok(keyed
        .into_iter()
        .enumerate()
        .map(|(id, (_, p))| ResponseVertex {
            id,
            assignment: labels.iter().cloned().zip(p).collect(),
        })
        .collect())
}

/// Vertices of `{ξ ∈ [0,1]^n : rows}` via double description on the
/// homogenized parametrization of the affine solution set.
fn polytope_vertices(rows: &[(Vec<f64>, f64)], n: usize) -> Result<Vec<Vec<f64>>> {
    // particular solution by least squares, then null-space directions
    let (xi0, dirs) = if rows.is_empty() {
        (vec![0.0; n], (0..n).map(|i| unit(n, i)).collect::<Vec<_>>())
    } else {
        let a = Matrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
        let b = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let x = least_squares(&a, &b, DEFAULT_RANK_TOL)?;
        let resid = (&a * &x - &b).amax();
        if resid > 1e-9 {
            return Err(Error::Invalid(format!(
                "effect identities are inconsistent (residual {resid:.2e})"
            )));
        }
        (x.iter().copied().collect(), null_space(&a, DEFAULT_RANK_TOL)?)
    };
    let m = dirs.len();
    let inside = |v: &[f64]| v.iter().all(|x| *x >= -VERTEX_TOL && *x <= 1.0 + VERTEX_TOL);
    if m == 0 {
        return Ok(if inside(&xi0) { vec![xi0] } else { Vec::new() });
    }
    // cone over (t, τ): 0 ≤ ξ0 τ + N t ≤ τ
    let dim = m + 1;
    let mut cons: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        for k in 0..m {
            lo[k] = dirs[k][i];
            hi[k] = -dirs[k][i];
        }
        lo[m] = xi0[i];
        hi[m] = 1.0 - xi0[i];
        cons.push(lo);
        cons.push(hi);
    }
    let mut tau = vec![0.0; dim];
    tau[m] = 1.0;
    cons.push(tau);
    let rays = match extreme_rays(&cons, dim) {
        Ok(r) => r,
        Err(Error::Degenerate(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(rays
        .into_iter()
        .filter(|r| r[m] > 1e-9)
        .map(|r| {
            (0..n)
                .map(|i| xi0[i] + (0..m).map(|k| dirs[k][i] * r[k]).sum::<f64>() / r[m])
                .collect::<Vec<f64>>()
        })
        .filter(|v| inside(v))
        .collect())
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub x: usize,
    pub y: usize,
    pub b: usize,
    pub c: f64,
}

/// `Σ c_{b,x,y} p(b|x,y) ≤ bound` on every noncontextual table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoncontextualityInequality {
    pub coefficients: Vec<Coefficient>,
    pub bound: f64,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preparations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measurements: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub bound: f64,
    pub violated: bool,
}

/// Evaluate an inequality on a statistics table.
pub fn evaluate(ineq: &NoncontextualityInequality, stats: &StatisticsTable) -> Result<Evaluation> {
    if !ineq.preparations.is_empty() && ineq.preparations != stats.preparations {
        return Err(Error::Dimension("preparation labels differ from the inequality's".into()));
    }
    if !ineq.measurements.is_empty() && ineq.measurements != stats.measurements {
        return Err(Error::Dimension("measurement labels differ from the inequality's".into()));
    }
    let mut value = 0.0;
    for c in &ineq.coefficients {
        let p = stats
            .p
            .get(c.x)
            .and_then(|r| r.get(c.y))
            .and_then(|r| r.get(c.b))
            .ok_or_else(|| {
                Error::Dimension(format!("coefficient ({}, {}, {}) outside the table", c.x, c.y, c.b))
            })?;
        value += c.c * p;
    }
    Ok(Evaluation {
        value,
        bound: ineq.bound,
        violated: value > ineq.bound + EVAL_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Membership {
    Feasible { model: OntologicalModel },
    Infeasible { inequality: NoncontextualityInequality },
}

impl Membership {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Membership::Feasible { .. })
    }
}

/// Row layout of the membership LP.
struct MembershipLp {
    lp: LinearProgram,
    nx: usize,
    nv: usize,
    /// `(x, y, b)` for each statistics row, in order.
    stat_rows: Vec<(usize, usize, usize)>,
    first_stat_row: usize,
}

fn resolve_states(stats: &StatisticsTable, ids: &[OperationalIdentity]) -> Result<Vec<Vec<(usize, f64)>>> {
    ids.iter()
        .map(|id| {
            if id.side != Side::States {
                return Err(Error::Invalid("effect identity passed as a state identity".into()));
            }
            id.terms
                .iter()
                .map(|t| {
                    stats
                        .preparations
                        .iter()
                        .position(|p| *p == t.label)
                        .map(|x| (x, t.coefficient))
                        .ok_or_else(|| Error::UnknownLabel(t.label.clone()))
                })
                .collect()
        })
        .collect()
}

/// `ξ^v_{b|y}` for every stats cell.
fn cell_values(stats: &StatisticsTable, vertices: &[ResponseVertex]) -> Result<Vec<Vec<Vec<f64>>>> {
    vertices
        .iter()
        .map(|v| {
            stats
                .outcomes
                .iter()
                .map(|outs| {
                    outs.iter()
                        .map(|l| v.value(l).ok_or_else(|| Error::UnknownLabel(l.clone())))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn build_lp(
    stats: &StatisticsTable,
    sids: &[Vec<(usize, f64)>],
    xi: &[Vec<Vec<f64>>],
) -> MembershipLp {
    let nx = stats.preparations.len();
    let nv = xi.len();
    let mut lp = LinearProgram::new(nx * nv);
    for x in 0..nx {
        lp.add((0..nv).map(|v| (x * nv + v, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for terms in sids {
        for v in 0..nv {
            lp.add(
                terms.iter().map(|&(x, a)| (x * nv + v, a)).collect(),
                Relation::Eq,
                0.0,
            );
        }
    }
    let first_stat_row = lp.constraints.len();
    let mut stat_rows = Vec::new();
    for x in 0..nx {
        for (y, outs) in stats.outcomes.iter().enumerate() {
            for b in 0..outs.len() {
                let coeffs = (0..nv)
                    .filter(|&v| xi[v][y][b] != 0.0)
                    .map(|v| (x * nv + v, xi[v][y][b]))
                    .collect();
                lp.add(coeffs, Relation::Eq, stats.p[x][y][b]);
                stat_rows.push((x, y, b));
            }
        }
    }
    MembershipLp {
        lp,
        nx,
        nv,
        stat_rows,
        first_stat_row,
    }
}

/// Decide whether `stats` admits a noncontextual model respecting the state
/// identities, with ontic states ranging over `vertices`.
pub fn membership(
    stats: &StatisticsTable,
    state_ids: &[OperationalIdentity],
    vertices: &[ResponseVertex],
) -> Result<Membership> {
    stats.check(1e-7)?;
    if vertices.is_empty() {
        return Err(Error::Invalid("no response vertices".into()));
    }
    let sids = resolve_states(stats, state_ids)?;
    let xi = cell_values(stats, vertices)?;
    let m = build_lp(stats, &sids, &xi);
    let sol = optim::solve(&m.lp)?;
    match sol.status {
        Status::Optimal => Ok(Membership::Feasible {
            model: model_from(stats, vertices, &sol.x, m.nx, m.nv),
        }),
        Status::Infeasible => {
            let ineq = inequality(stats, &xi, &m, sol.farkas.as_ref())?;
            Ok(Membership::Infeasible { inequality: ineq })
        }
        Status::Unbounded => Err(Error::Lp("membership LP reported unbounded".into())),
    }
}

fn model_from(
    stats: &StatisticsTable,
    vertices: &[ResponseVertex],
    x: &[f64],
    nx: usize,
    nv: usize,
) -> OntologicalModel {
    let support: Vec<usize> = (0..nv)
        .filter(|&v| (0..nx).any(|p| x[p * nv + v] > 1e-12))
        .collect();
    let mut effects: Vec<String> = Vec::new();
    for outs in &stats.outcomes {
        for l in outs {
            if !effects.contains(l) {
                effects.push(l.clone());
            }
        }
    }
    let mu = (0..nx)
        .map(|p| {
            let row: Vec<f64> = support.iter().map(|&v| x[p * nv + v].max(0.0)).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let xi = effects
        .iter()
        .map(|l| {
            support
                .iter()
                .map(|&v| vertices[v].value(l).unwrap_or(0.0))
                .collect()
        })
        .collect();
    OntologicalModel {
        ontic_states: support.iter().map(|v| format!("v{}", vertices[*v].id)).collect(),
        preparations: stats.preparations.clone(),
        mu,
        effects,
        xi,
        measurements: stats
            .measurements
            .iter()
            .zip(&stats.outcomes)
            .map(|(l, o)| Measurement::new(l.clone(), o.clone()))
            .collect(),
    }
}

/// Preparation-averaged table, repeated for every preparation.
fn averaged(stats: &StatisticsTable) -> Vec<Vec<Vec<f64>>> {
    let nx = stats.preparations.len() as f64;
    let mean: Vec<Vec<f64>> = stats
        .outcomes
        .iter()
        .enumerate()
        .map(|(y, outs)| {
            (0..outs.len())
                .map(|b| stats.p.iter().map(|r| r[y][b]).sum::<f64>() / nx)
                .collect()
        })
        .collect();
    vec![mean; stats.preparations.len()]
}

/// Turn a separating functional `g(q) = k + Σ w·q` (nonpositive on
/// noncontextual tables, positive on `stats`) into a tight inequality.
fn normalize(
    stats: &StatisticsTable,
    xi: &[Vec<Vec<f64>>],
    m: &MembershipLp,
    w: &[f64],
    k: f64,
    provenance: &str,
) -> Result<Option<NoncontextualityInequality>> {
    let pbar = averaged(stats);
    let nxy = (stats.preparations.len() * stats.measurements.len()) as f64;
    let eval = |q: &[Vec<Vec<f64>>]| -> f64 {
        k + m
            .stat_rows
            .iter()
            .zip(w)
            .map(|(&(x, y, b), wi)| wi * q[x][y][b])
            .sum::<f64>()
    };
    let g_obs = eval(&stats.p);
    let g_bar = eval(&pbar);
    if !(g_obs > 1e-12) {
        return Ok(None);
    }
    // f = α g + β with f(obs) = 1 and f(bar) = ½ when the average is
    // separated from the observation; otherwise f = g / g(obs)
    let (alpha, beta) = if g_obs - g_bar > 1e-9 {
        let alpha = 0.5 / (g_obs - g_bar);
        (alpha, 1.0 - alpha * g_obs)
    } else {
        (1.0 / g_obs, 0.0)
    };
    // constant folded in: Σ_b p(b|x,y) = 1 for every (x, y)
    let shift = (alpha * k + beta) / nxy;
    let mut coefficients: Vec<Coefficient> = m
        .stat_rows
        .iter()
        .zip(w)
        .map(|(&(x, y, b), wi)| Coefficient {
            x,
            y,
            b,
            c: alpha * wi + shift,
        })
        .collect();
    for c in coefficients.iter_mut() {
        if c.c.abs() < 1e-13 {
            c.c = 0.0;
        }
    }

    // certified bound: maximize the functional over noncontextual tables
    let mut lp = LinearProgram::new(m.nx * m.nv);
    for c in m.lp.constraints.iter().take(m.first_stat_row) {
        lp.constraints.push(c.clone());
    }
    let mut obj = vec![0.0; m.nx * m.nv];
    for c in &coefficients {
        for v in 0..m.nv {
            obj[c.x * m.nv + v] += c.c * xi[v][c.y][c.b];
        }
    }
    lp.set_objective(Sense::Maximize, obj);
    let sol = optim::solve(&lp)?;
    if sol.status != Status::Optimal {
        return Err(Error::Lp(format!(
            "bound LP ended {:?}",
            sol.status
        )));
    }
    Ok(Some(NoncontextualityInequality {
        coefficients,
        bound: sol.objective,
        provenance: provenance.to_string(),
        preparations: stats.preparations.clone(),
        measurements: stats.measurements.clone(),
    }))
}

fn inequality(
    stats: &StatisticsTable,
    xi: &[Vec<Vec<f64>>],
    m: &MembershipLp,
    farkas: Option<&optim::FarkasCertificate>,
) -> Result<NoncontextualityInequality> {
    // Depolarizing LP: min r with (1−r) p + r p̄ noncontextual.
    let pbar = averaged(stats);
    let mut lp = m.lp.clone();
    let r = lp.add_var(0.0, 1.0, 0.0);
    for (row, &(x, y, b)) in m.stat_rows.iter().enumerate() {
        let c = &mut lp.constraints[m.first_stat_row + row];
        let d = stats.p[x][y][b] - pbar[x][y][b];
        if d != 0.0 {
            c.coeffs.push((r, d));
        }
    }
    let mut obj = vec![0.0; lp.num_vars()];
    obj[r] = 1.0;
    lp.set_objective(Sense::Minimize, obj);
    if let Ok(sol) = optim::solve(&lp) {
        if sol.status == Status::Optimal && sol.x[r] < 1.0 - 1e-9 {
            // shadow prices: r* = Σ y_i b_i, and Σ y_i b_i(q) ≤ 0 on
            // noncontextual tables
            let k: f64 = sol.duals[..m.nx].iter().sum();
            let w: Vec<f64> = sol.duals[m.first_stat_row..m.first_stat_row + m.stat_rows.len()].to_vec();
            if let Some(ineq) = normalize(stats, xi, m, &w, k, "robustness-dual")? {
                return Ok(ineq);
            }
        }
    }
    // Fallback: phase-one Farkas multipliers of the membership LP.
    let f = farkas.ok_or_else(|| Error::Lp("infeasible LP without certificate".into()))?;
    // g·μ ≥ β on feasible μ, g ≤ 0; so β(q) = Σ y b(q) ≤ 0 on noncontextual q
    let k: f64 = f.y[..m.nx].iter().sum();
    let w: Vec<f64> = f.y[m.first_stat_row..].to_vec();
    normalize(stats, xi, m, &w, k, "membership-farkas")?
        .ok_or_else(|| Error::Numerical("Farkas functional does not separate the table".into()))
}

/// State and effect identity bases of a fragment, taken among its vectors
/// restricted to the accessible subspace: equivalence relative to the
/// procedures the fragment actually contains.
pub fn accessible_identities(
    f: &Fragment,
) -> Result<(Vec<OperationalIdentity>, Vec<OperationalIdentity>)> {
    let af = accessibilize(f)?;
    let g = Fragment {
        name: f.name.clone(),
        dimension: af.dimension,
        unit_effect: af.unit_effect.clone(),
        states: af.states.clone(),
        effects: af
            .effects
            .iter()
            .filter(|e| !af.added_complements.contains(&e.label))
            .cloned()
            .collect(),
        measurements: f.measurements.clone(),
        subsystems: None,
        extra: Default::default(),
    };
    let sids = if g.states.len() >= 2 {
        find_identities(&g, Side::States, DEFAULT_RANK_TOL)?
    } else {
        Vec::new()
    };
    let eids = find_identities(&g, Side::Effects, DEFAULT_RANK_TOL)?;
    Ok((sids, eids))
}

/// Membership verdict for a fragment's own predictions and identities;
/// returns the violated inequality, if any. Oversized response polytopes
/// yield `None`.
pub fn inequality_for_fragment(f: &Fragment) -> Result<Option<NoncontextualityInequality>> {
    let stats = predict(f)?;
    let (sids, eids) = accessible_identities(f)?;
    let vertices = match response_vertices(&eids, &f.measurements) {
        Ok(v) => v,
        Err(e) if e.is_resource_limit() => return Ok(None),
        Err(e) => return Err(e),
    };
    match membership(&stats, &sids, &vertices)? {
        Membership::Feasible { .. } => Ok(None),
        Membership::Infeasible { inequality } => Ok(Some(inequality)),
    }
}

/// Membership test of a fragment's predicted statistics against its full
/// accessible state and effect identity bases.
pub fn fragment_membership(f: &Fragment) -> Result<Membership> {
    let stats = predict(f)?;
    let (sids, eids) = accessible_identities(f)?;
    let vertices = response_vertices(&eids, &f.measurements)?;
    membership(&stats, &sids, &vertices)
}

/// Statistics of a random explicit noncontextual model: a random mixture of
/// vertices of the polytope of identity-respecting epistemic states.
pub fn random_noncontextual_table<R: Rng + ?Sized>(
    template: &StatisticsTable,
    state_ids: &[OperationalIdentity],
    vertices: &[ResponseVertex],
    rng: &mut R,
) -> Result<StatisticsTable> {
    let sids = resolve_states(template, state_ids)?;
    let xi = cell_values(template, vertices)?;
    let nx = template.preparations.len();
    let nv = vertices.len();
    let mut base = LinearProgram::new(nx * nv);
    for x in 0..nx {
        base.add((0..nv).map(|v| (x * nv + v, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for terms in &sids {
        for v in 0..nv {
            base.add(terms.iter().map(|&(x, a)| (x * nv + v, a)).collect(), Relation::Eq, 0.0);
        }
    }
    let picks = 3;
    let mut mu = vec![0.0; nx * nv];
    let weights: Vec<f64> = (0..picks).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let mut lp = base.clone();
        let obj: Vec<f64> = (0..nx * nv).map(|_| rng.random_range(-1.0..1.0)).collect();
        lp.set_objective(Sense::Maximize, obj);
        let sol = optim::solve(&lp)?;
        if sol.status != Status::Optimal {
            return Err(Error::Invalid("state identities admit no epistemic states".into()));
        }
        mu.iter_mut().zip(&sol.x).for_each(|(m, v)| *m += w / total * v.max(0.0));
    }
    let mut out = template.clone();
    out.counts = None;
    out.trials = None;
    for x in 0..nx {
        for (y, outs) in template.outcomes.iter().enumerate() {
            for b in 0..outs.len() {
                out.p[x][y][b] = (0..nv).map(|v| mu[x * nv + v] * xi[v][y][b]).sum();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::MODEL_TOL;
    use crate::scenarios;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary(label: &str, a: &str, b: &str) -> Measurement {
        Measurement::new(label, vec![a.into(), b.into()])
    }

    #[test]
    fn two_binary_measurements_give_four_vertices() {
        let ms = [binary("y0", "a0", "a1"), binary("y1", "b0", "b1")];
        let v = response_vertices(&[], &ms).unwrap();
        assert_eq!(v.len(), 4);
        for r in &v {
            assert!(r.assignment.values().all(|x| *x == 0.0 || *x == 1.0));
        }
    }

    #[test]
    fn fixed_effect_collapses_to_one_vertex() {
        let ms = [binary("y0", "e0", "e1")];
        let id = OperationalIdentity::from_pairs(Side::Effects, &[("e0", 1.0), (UNIT_LABEL, -0.5)])
            .unwrap();
        let v = response_vertices(&[id], &ms).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].value("e0"), Some(0.5));
        assert_eq!(v[0].value("e1"), Some(0.5));
    }

    #[test]
    fn pr_response_vertices() {
        let f = scenarios::boxworld_pr();
        let ids = find_identities(&f, Side::Effects, 1e-9).unwrap();
        assert_eq!(response_vertices(&ids, &f.measurements).unwrap().len(), 4);
    }

    #[test]
    fn cross_measurement_identity_uses_general_path() {
        // e0 of y0 equals e0 of y1: vertices with matching first outcomes
        let ms = [binary("y0", "a0", "a1"), binary("y1", "b0", "b1")];
        let id = OperationalIdentity::from_pairs(Side::Effects, &[("a0", 1.0), ("b0", -1.0)]).unwrap();
        let v = response_vertices(&[id], &ms).unwrap();
        assert_eq!(v.len(), 2);
        for r in &v {
            assert_eq!(r.value("a0"), r.value("b0"));
        }
    }

    #[test]
    fn size_limit() {
        let ms: Vec<Measurement> = (0..13)
            .map(|i| binary(&format!("y{i}"), &format!("a{i}"), &format!("b{i}")))
            .collect();
        assert!(response_vertices(&[], &ms).unwrap_err().is_resource_limit());
    }

    fn pr_inputs() -> (StatisticsTable, Vec<OperationalIdentity>, Vec<ResponseVertex>) {
        let f = scenarios::boxworld_pr();
        let stats = predict(&f).unwrap();
        let sids = find_identities(&f, Side::States, 1e-9).unwrap();
        let eids = find_identities(&f, Side::Effects, 1e-9).unwrap();
        let v = response_vertices(&eids, &f.measurements).unwrap();
        (stats, sids, v)
    }

    #[test]
    fn pr_inequality() {
        let (stats, sids, v) = pr_inputs();
        let Membership::Infeasible { inequality } = membership(&stats, &sids, &v).unwrap() else {
            panic!("PR statistics must be contextual")
        };
        let e = evaluate(&inequality, &stats).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9, "{e:?}");
        assert!((e.bound - 0.75).abs() < 1e-9, "{e:?}");
        assert!(e.violated);
        let mut uniform = stats.clone();
        uniform.p.iter_mut().flatten().flatten().for_each(|p| *p = 0.5);
        let u = evaluate(&inequality, &uniform).unwrap();
        assert!((u.value - 0.5).abs() < 1e-9);
        assert!(!u.violated);
    }

    #[test]
    fn pr_without_identity_is_feasible() {
        let (stats, _, v) = pr_inputs();
        let Membership::Feasible { model } = membership(&stats, &[], &v).unwrap() else {
            panic!("no identities means no constraint")
        };
        let check = model.check(&stats, &[], &[], MODEL_TOL).unwrap();
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn mediary_is_feasible() {
        let m = fragment_membership(&scenarios::boxworld_classical_mediary()).unwrap();
        assert!(m.is_feasible());
    }

    #[test]
    fn random_noncontextual_tables_satisfy_pr_inequality() {
        let (stats, sids, v) = pr_inputs();
        let Membership::Infeasible { inequality } = membership(&stats, &sids, &v).unwrap() else {
            unreachable!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let t = random_noncontextual_table(&stats, &sids, &v, &mut rng).unwrap();
            assert!(membership(&t, &sids, &v).unwrap().is_feasible());
            let e = evaluate(&inequality, &t).unwrap();
            assert!(e.value <= e.bound + 1e-7);
        }
    }

    #[test]
    fn evaluate_rejects_bad_shapes() {
        let (stats, sids, v) = pr_inputs();
        let Membership::Infeasible { mut inequality } = membership(&stats, &sids, &v).unwrap() else {
            unreachable!()
        };
        inequality.coefficients.push(Coefficient { x: 9, y: 0, b: 0, c: 1.0 });
        assert!(evaluate(&inequality, &stats).is_err());
    }

    #[test]
    fn inequality_json_keys() {
        let (stats, sids, v) = pr_inputs();
        let Membership::Infeasible { inequality } = membership(&stats, &sids, &v).unwrap() else {
            unreachable!()
        };
        let j = serde_json::to_value(&inequality).unwrap();
        for key in ["x", "y", "b", "c"] {
            assert!(j["coefficients"][0].get(key).is_some());
        }
        assert!(j["bound"].is_number());
        assert!(j["provenance"].is_string());
    }

    #[test]
    fn notebook_inequality_comes_from_accessible_identities() {
        let f = scenarios::lab_notebook(scenarios::NotebookVariant::ReadoutOnSystem).unwrap();
        let ineq = inequality_for_fragment(&f).unwrap().expect("contextual");
        let e = evaluate(&ineq, &predict(&f).unwrap()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9 && (e.bound - 0.75).abs() < 1e-9);
        assert!(!fragment_membership(&f).unwrap().is_feasible());
    }
}
