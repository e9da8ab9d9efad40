//! Secondary procedures: convex mixtures of realized states (or effects)
//! chosen to satisfy target identities exactly while staying as close to
//! the realized procedures as possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment::{GptVector, Side};
use crate::identities::{OperationalIdentity, UNIT_LABEL};
use crate::lincone::{max_abs, norm};
use crate::optim::{self, FarkasCertificate, LinearProgram, Relation, Sense, Status};

/// Label of the zero effect in effect mixtures.
pub const ZERO_LABEL: &str = "0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondarySolution {
    /// Labels of the mixed procedures, one per weight column.
    pub sources: Vec<String>,
    /// `weights[x][y]`: weight of source `y` in secondary `x`.
    pub weights: Vec<Vec<f64>>,
    pub secondaries: Vec<GptVector>,
    /// `‖Σ α v′‖∞` per target identity.
    pub residuals: Vec<f64>,
    /// `c_xx` per secondary.
    pub primary_weight: Vec<f64>,
    /// `1 − min_x c_xx`.
    pub noise_cost: f64,
}

impl SecondarySolution {
    pub fn mean_primary_weight(&self) -> f64 {
        self.primary_weight.iter().sum::<f64>() / self.primary_weight.len().max(1) as f64
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SecondaryOutcome {
    Solved(SecondarySolution),
    Unreachable { farkas: FarkasCertificate },
}

impl SecondaryOutcome {
    pub fn solution(&self) -> Option<&SecondarySolution> {
        match self {
            SecondaryOutcome::Solved(s) => Some(s),
            SecondaryOutcome::Unreachable { .. } => None,
        }
    }
}

struct Problem<'a> {
    /// Secondaries being built (one per realized vector).
    targets_of: &'a [GptVector],
    /// Mixing sources; the first `targets_of.len()` are the primaries.
    sources: Vec<GptVector>,
    /// Fixed vector standing in for the unit label, if allowed.
    unit: Option<Vec<f64>>,
    side: Side,
}

fn solve_problem(
    p: &Problem,
    targets: &[OperationalIdentity],
    order: Option<&[usize]>,
) -> Result<SecondaryOutcome> {
    let n = p.targets_of.len();
    let s = p.sources.len();
    if n == 0 {
        return Err(Error::Invalid("no realized vectors".into()));
    }
    let dim = p.targets_of[0].vector.len();
    if p.sources.iter().any(|v| v.vector.len() != dim) {
        return Err(Error::Dimension("realized vectors differ in length".into()));
    }
    let nvars = n * s;
    let order: Vec<usize> = match order {
        Some(o) => {
            let mut check = o.to_vec();
            check.sort_unstable();
            if check != (0..nvars).collect::<Vec<_>>() {
                return Err(Error::Invalid("variable order is not a permutation".into()));
            }
            o.to_vec()
        }
        None => (0..nvars).collect(),
    };
    // logical variable (x, y) = x*s + y lives in LP column col[x*s + y]
    let mut col = vec![0usize; nvars];
    for (c, &logical) in order.iter().enumerate() {
        col[logical] = c;
    }

    let mut lp = LinearProgram::new(nvars);
    let mut obj = vec![0.0; nvars];
    for x in 0..n {
        obj[col[x * s + x]] = 1.0;
        lp.add((0..s).map(|y| (col[x * s + y], 1.0)).collect(), Relation::Eq, 1.0);
    }
    lp.set_objective(Sense::Maximize, obj);

    let mut resolved: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for id in targets {
        if id.side != p.side {
            return Err(Error::Invalid(format!(
                "target identity is over {}, expected {}",
                id.side, p.side
            )));
        }
        let mut terms = Vec::new();
        let mut unit_coeff = 0.0;
        for t in &id.terms {
            match p.targets_of.iter().position(|v| v.label == t.label) {
                Some(x) => terms.push((x, t.coefficient)),
                None if t.label == UNIT_LABEL && p.unit.is_some() => unit_coeff += t.coefficient,
                None => return Err(Error::UnknownLabel(t.label.clone())),
            }
        }
        resolved.push((terms, unit_coeff));
    }
    for (terms, unit_coeff) in &resolved {
        for k in 0..dim {
            let mut coeffs = Vec::new();
            for &(x, a) in terms {
                for y in 0..s {
                    let v = a * p.sources[y].vector[k];
                    if v != 0.0 {
                        coeffs.push((col[x * s + y], v));
                    }
                }
            }
            let rhs = -unit_coeff * p.unit.as_ref().map_or(0.0, |u| u[k]);
            lp.add(coeffs, Relation::Eq, rhs);
        }
    }

    let sol = optim::solve(&lp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Ok(SecondaryOutcome::Unreachable {
                farkas: sol.farkas.expect("infeasible LPs carry a certificate"),
            })
        }
        Status::Unbounded => return Err(Error::Lp("secondary LP reported unbounded".into())),
    }

    let weights: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            let row: Vec<f64> = (0..s)
                .map(|y| sol.x[col[x * s + y]])
                .map(|w| if w < 1e-13 { 0.0 } else { w })
                .collect();
            let t: f64 = row.iter().sum();
            row.into_iter().map(|v| v / t).collect()
        })
        .collect();
    let secondaries: Vec<GptVector> = (0..n)
        .map(|x| {
            let mut v = vec![0.0; dim];
            for y in 0..s {
                for (a, b) in v.iter_mut().zip(&p.sources[y].vector) {
                    *a += weights[x][y] * b;
                }
            }
            GptVector::new(p.targets_of[x].label.clone(), v)
        })
        .collect();
    let residuals = resolved
        .iter()
        .map(|(terms, unit_coeff)| {
            let mut r = vec![0.0; dim];
            for &(x, a) in terms {
                r.iter_mut().zip(&secondaries[x].vector).for_each(|(ri, v)| *ri += a * v);
            }
            if let Some(u) = &p.unit {
                r.iter_mut().zip(u).for_each(|(ri, v)| *ri += unit_coeff * v);
            }
            max_abs(&r)
        })
        .collect();
    let primary_weight: Vec<f64> = (0..n).map(|x| weights[x][x]).collect();
    let noise_cost = 1.0 - primary_weight.iter().copied().fold(1.0, f64::min);
    Ok(SecondaryOutcome::Solved(SecondarySolution {
        sources: p.sources.iter().map(|v| v.label.clone()).collect(),
        weights,
        secondaries,
        residuals,
        primary_weight,
        noise_cost,
    }))
}

/// Secondary states `s′_x = Σ_y c_xy s_y` satisfying every target identity,
/// maximizing `Σ_x c_xx`.
pub fn secondary_states(
    realized: &[GptVector],
    targets: &[OperationalIdentity],
) -> Result<SecondaryOutcome> {
    secondary_states_with_order(realized, targets, None)
}

/// As [`secondary_states`], with the LP columns laid out in `order`
/// (a permutation of the `n²` weight indices `x·n + y`).
pub fn secondary_states_with_order(
    realized: &[GptVector],
    targets: &[OperationalIdentity],
    order: Option<&[usize]>,
) -> Result<SecondaryOutcome> {
    let p = Problem {
        targets_of: realized,
        sources: realized.to_vec(),
        unit: None,
        side: Side::States,
    };
    solve_problem(&p, targets, order)
}

/// Secondary effects mixed from the realized effects, the unit effect and
/// the zero effect. Targets may mention the unit effect by its label.
pub fn secondary_effects(
    realized: &[GptVector],
    unit: &[f64],
    targets: &[OperationalIdentity],
) -> Result<SecondaryOutcome> {
    let mut sources = realized.to_vec();
    sources.push(GptVector::new(UNIT_LABEL, unit.to_vec()));
    sources.push(GptVector::new(ZERO_LABEL, vec![0.0; unit.len()]));
    let p = Problem {
        targets_of: realized,
        sources,
        unit: Some(unit.to_vec()),
        side: Side::Effects,
    };
    solve_problem(&p, targets, None)
}

/// Move each state toward the centroid by a seeded random fraction of
/// `amplitude` along its radial direction.
pub fn radial_perturbation(states: &[GptVector], amplitude: f64, seed: u64) -> Vec<GptVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = states.len().max(1) as f64;
    let dim = states.first().map_or(0, |s| s.vector.len());
    let mut center = vec![0.0; dim];
    for s in states {
        center.iter_mut().zip(&s.vector).for_each(|(c, v)| *c += v / n);
    }
    states
        .iter()
        .map(|s| {
            let dir: Vec<f64> = s.vector.iter().zip(&center).map(|(v, c)| v - c).collect();
            let len = norm(&dir);
            let step = amplitude * rng.random::<f64>();
            let v = if len > 0.0 {
                s.vector
                    .iter()
                    .zip(&dir)
                    .map(|(v, d)| v - step * d / len)
                    .collect()
            } else {
                s.vector.clone()
            };
            GptVector::new(s.label.clone(), v)
        })
        .collect()
}

/// Shift each effect by a seeded random vector of sup-norm `amplitude`
/// that leaves the unit coordinate direction alone.
pub fn effect_perturbation(effects: &[GptVector], amplitude: f64, seed: u64) -> Vec<GptVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    effects
        .iter()
        .map(|e| {
            let v = e
                .vector
                .iter()
                .map(|x| x + amplitude * rng.random_range(-1.0..1.0))
                .collect();
            GptVector::new(e.label.clone(), v)
        })
        .collect()
}
