//! GPT fragments: states, effects, measurements and the unit effect.
//!
//! Probabilities are plain dot products `e . s`. Composite systems are
//! Kronecker products with the first subsystem as the most significant index.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::lincone::dot;

/// Tolerance for every fragment invariant.
pub const FRAGMENT_TOL: f64 = 1e-9;
/// Largest composite dimension produced by [`tensor`].
pub const MAX_COMPOSITE_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    States,
    Effects,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::States => "states",
            Side::Effects => "effects",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "states" | "state" => Ok(Side::States),
            "effects" | "effect" => Ok(Side::Effects),
            other => Err(Error::Invalid(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GptVector {
    pub label: String,
    pub vector: Vec<f64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl GptVector {
    pub fn new(label: impl Into<String>, vector: Vec<f64>) -> Self {
        GptVector {
            label: label.into(),
            vector,
            extra: Map::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    /// Effect labels, one per outcome, in outcome order.
    pub effects: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Measurement {
    pub fn new(label: impl Into<String>, effects: Vec<String>) -> Self {
        Measurement {
            label: label.into(),
            effects,
            extra: Map::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    pub name: String,
    pub dimension: usize,
    /// Unit effect of this factor; required to trace it out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_effect: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub name: String,
    pub dimension: usize,
    pub unit_effect: Vec<f64>,
    pub states: Vec<GptVector>,
    pub effects: Vec<GptVector>,
    #[serde(default)]
    pub measurements: Vec<Measurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystems: Option<Vec<Subsystem>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyLabel,
    DuplicateLabel,
    StateNormalization,
    ProbabilityRange,
    MeasurementNormalization,
    MissingEffect,
    SubsystemDimensions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub labels: Vec<String>,
    /// Size of the violation beyond tolerance (0 for structural problems).
    pub magnitude: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub fragment: String,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.message.clone())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl Fragment {
    pub fn state(&self, label: &str) -> Option<&GptVector> {
        self.states.iter().find(|s| s.label == label)
    }

    pub fn effect(&self, label: &str) -> Option<&GptVector> {
        self.effects.iter().find(|e| e.label == label)
    }

    pub fn vectors(&self, side: Side) -> &[GptVector] {
        match side {
            Side::States => &self.states,
            Side::Effects => &self.effects,
        }
    }

    pub fn from_json(text: &str) -> Result<Fragment> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Check shapes and finiteness; these are input errors, not invariant
    /// failures.
    pub fn check_well_formed(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::Dimension("fragment dimension is zero".into()));
        }
        let check = |what: &str, label: &str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                return Err(Error::Dimension(format!(
                    "{what} `{label}` has length {}, fragment dimension is {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{what} `{label}`")));
            }
            Ok(())
        };
        check("unit effect", "u", &self.unit_effect)?;
        for s in &self.states {
            check("state", &s.label, &s.vector)?;
        }
        for e in &self.effects {
            check("effect", &e.label, &e.vector)?;
        }
        Ok(())
    }
}

/// Check every fragment invariant and report all violations.
pub fn validate(f: &Fragment) -> Result<ValidationReport> {
    f.check_well_formed()?;
    let tol = FRAGMENT_TOL;
    let mut violations = Vec::new();

    for (side, list) in [("state", &f.states), ("effect", &f.effects)] {
        let mut seen = HashSet::new();
        for v in list.iter() {
            if v.label.is_empty() {
                violations.push(Violation {
                    kind: ViolationKind::EmptyLabel,
                    labels: vec![],
                    magnitude: 0.0,
                    message: format!("{side} with empty label"),
                });
            } else if !seen.insert(v.label.as_str()) {
                violations.push(Violation {
                    kind: ViolationKind::DuplicateLabel,
                    labels: vec![v.label.clone()],
                    magnitude: 0.0,
                    message: format!("duplicate {side} label `{}`", v.label),
                });
            }
        }
    }

    for s in &f.states {
        let n = dot(&f.unit_effect, &s.vector);
        let dev = (n - 1.0).abs();
        if dev > tol {
            violations.push(Violation {
                kind: ViolationKind::StateNormalization,
                labels: vec![s.label.clone()],
                magnitude: dev,
                message: format!("state normalization: u . {} = {n}", s.label),
            });
        }
    }

    for s in &f.states {
        for e in &f.effects {
            let p = dot(&e.vector, &s.vector);
            let excess = (-p).max(p - 1.0);
            if excess > tol {
                violations.push(Violation {
                    kind: ViolationKind::ProbabilityRange,
                    labels: vec![e.label.clone(), s.label.clone()],
                    magnitude: excess,
                    message: format!("probability range: {} . {} = {p}", e.label, s.label),
                });
            }
        }
    }

    let effects: HashMap<&str, &GptVector> =
        f.effects.iter().map(|e| (e.label.as_str(), e)).collect();
    for m in &f.measurements {
        let mut sum = vec![0.0; f.dimension];
        let mut complete = true;
        for label in &m.effects {
            match effects.get(label.as_str()) {
                Some(e) => sum.iter_mut().zip(&e.vector).for_each(|(a, b)| *a += b),
                None => {
                    complete = false;
                    violations.push(Violation {
                        kind: ViolationKind::MissingEffect,
                        labels: vec![m.label.clone(), label.clone()],
                        magnitude: 0.0,
                        message: format!(
                            "measurement `{}` references missing effect `{label}`",
                            m.label
                        ),
                    });
                }
            }
        }
        if complete {
            let dev = sum
                .iter()
                .zip(&f.unit_effect)
                .fold(0.0_f64, |a, (x, u)| a.max((x - u).abs()));
            if dev > tol {
                violations.push(Violation {
                    kind: ViolationKind::MeasurementNormalization,
                    labels: vec![m.label.clone()],
                    magnitude: dev,
                    message: format!(
                        "measurement normalization: effects of `{}` deviate from u by {dev}",
                        m.label
                    ),
                });
            }
        }
    }

    if let Some(subs) = &f.subsystems {
        let product: usize = subs.iter().map(|s| s.dimension).product();
        let unit_ok = subs.iter().all(|s| {
            s.unit_effect
                .as_ref()
                .map_or(true, |u| u.len() == s.dimension)
        });
        if product != f.dimension || !unit_ok {
            violations.push(Violation {
                kind: ViolationKind::SubsystemDimensions,
                labels: subs.iter().map(|s| s.name.clone()).collect(),
                magnitude: 0.0,
                message: format!(
                    "subsystem dimensions multiply to {product}, fragment dimension is {}",
                    f.dimension
                ),
            });
        }
    }

    Ok(ValidationReport {
        fragment: f.name.clone(),
        passed: violations.is_empty(),
        violations,
    })
}

pub(crate) fn require_valid(f: &Fragment) -> Result<()> {
    let report = validate(f)?;
    if report.passed {
        Ok(())
    } else {
        Err(Error::InvalidFragment {
            name: f.name.clone(),
            summary: report.summary(),
        })
    }
}

/// Outcome statistics `p(b|x,y)` indexed `[x][y][b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsTable {
    pub preparations: Vec<String>,
    pub measurements: Vec<String>,
    /// Per measurement, the outcome (effect) labels in order.
    pub outcomes: Vec<Vec<String>>,
    pub p: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<Vec<Vec<u64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<Vec<u64>>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl StatisticsTable {
    /// Check shape, range and per-cell normalization.
    pub fn check(&self, tol: f64) -> Result<()> {
        let (nx, ny) = (self.preparations.len(), self.measurements.len());
        if self.outcomes.len() != ny {
            return Err(Error::Dimension(format!(
                "{} outcome lists for {ny} measurements",
                self.outcomes.len()
            )));
        }
        if self.p.len() != nx {
            return Err(Error::Dimension(format!(
                "p has {} rows for {nx} preparations",
                self.p.len()
            )));
        }
        for (x, row) in self.p.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::Dimension(format!(
                    "p[{x}] has {} entries for {ny} measurements",
                    row.len()
                )));
            }
            for (y, cell) in row.iter().enumerate() {
                if cell.len() != self.outcomes[y].len() {
                    return Err(Error::Dimension(format!(
                        "p[{x}][{y}] has {} outcomes, expected {}",
                        cell.len(),
                        self.outcomes[y].len()
                    )));
                }
                if cell.iter().any(|v| !v.is_finite() || *v < -tol || *v > 1.0 + tol) {
                    return Err(Error::Invalid(format!("p[{x}][{y}] outside [0,1]")));
                }
                let total: f64 = cell.iter().sum();
                if (total - 1.0).abs() > tol {
                    return Err(Error::Invalid(format!(
                        "p[{x}][{y}] sums to {total}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize, b: usize) -> f64 {
        self.p[x][y][b]
    }

    pub fn from_json(text: &str) -> Result<StatisticsTable> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Tabulate `p(b|x,y) = e_{b|y} . s_x`.
pub fn predict(f: &Fragment) -> Result<StatisticsTable> {
    require_valid(f)?;
    let effects: HashMap<&str, &GptVector> =
        f.effects.iter().map(|e| (e.label.as_str(), e)).collect();
    let p = f
        .states
        .iter()
        .map(|s| {
            f.measurements
                .iter()
                .map(|m| {
                    m.effects
                        .iter()
                        .map(|l| dot(&effects[l.as_str()].vector, &s.vector))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(StatisticsTable {
        preparations: f.states.iter().map(|s| s.label.clone()).collect(),
        measurements: f.measurements.iter().map(|m| m.label.clone()).collect(),
        outcomes: f.measurements.iter().map(|m| m.effects.clone()).collect(),
        p,
        counts: None,
        trials: None,
        extra: Map::new(),
    })
}

pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

pub fn product_label(a: &str, b: &str) -> String {
    format!("{a}⊗{b}")
}

fn subsystems_of(f: &Fragment, default_name: &str) -> Vec<Subsystem> {
    f.subsystems.clone().unwrap_or_else(|| {
        vec![Subsystem {
            name: default_name.to_string(),
            dimension: f.dimension,
            unit_effect: Some(f.unit_effect.clone()),
            extra: Map::new(),
        }]
    })
}

/// Composite of two fragments with subsystems named `A` and `B`.
pub fn tensor(a: &Fragment, b: &Fragment) -> Result<Fragment> {
    tensor_named(a, b, "A", "B")
}

/// Composite of two fragments: all pairwise products of states, effects and
/// measurements, unit effect `u_a ⊗ u_b`.
pub fn tensor_named(a: &Fragment, b: &Fragment, name_a: &str, name_b: &str) -> Result<Fragment> {
    require_valid(a)?;
    require_valid(b)?;
    let dim = a.dimension * b.dimension;
    if dim > MAX_COMPOSITE_DIM {
        return Err(Error::Limit {
            what: "composite dimension",
            value: dim,
            limit: MAX_COMPOSITE_DIM,
        });
    }
    let pairs = |xs: &[GptVector], ys: &[GptVector]| -> Vec<GptVector> {
        xs.iter()
            .flat_map(|x| {
                ys.iter().map(move |y| {
                    GptVector::new(product_label(&x.label, &y.label), kron(&x.vector, &y.vector))
                })
            })
            .collect()
    };
    let measurements = a
        .measurements
        .iter()
        .flat_map(|ma| {
            b.measurements.iter().map(move |mb| {
                let effects = ma
                    .effects
                    .iter()
                    .flat_map(|ea| mb.effects.iter().map(move |eb| product_label(ea, eb)))
                    .collect();
                Measurement::new(product_label(&ma.label, &mb.label), effects)
            })
        })
        .collect();
    let mut subsystems = subsystems_of(a, name_a);
    subsystems.extend(subsystems_of(b, name_b));
    Ok(Fragment {
        name: product_label(&a.name, &b.name),
        dimension: dim,
        unit_effect: kron(&a.unit_effect, &b.unit_effect),
        states: pairs(&a.states, &b.states),
        effects: pairs(&a.effects, &b.effects),
        measurements,
        subsystems: Some(subsystems),
        extra: Map::new(),
    })
}

/// Contraction maps for tracing out every subsystem but one.
pub(crate) struct Marginalizer {
    dims: Vec<usize>,
    units: Vec<Vec<f64>>,
    keep: usize,
}

impl Marginalizer {
    pub(crate) fn new(f: &Fragment, keep: &str) -> Result<Marginalizer> {
        let subs = f.subsystems.as_ref().ok_or(Error::MissingSubsystems)?;
        let keep_idx = subs
            .iter()
            .position(|s| s.name == keep)
            .ok_or_else(|| Error::UnknownSubsystem(keep.to_string()))?;
        let dims: Vec<usize> = subs.iter().map(|s| s.dimension).collect();
        if dims.iter().product::<usize>() != f.dimension {
            return Err(Error::Dimension(format!(
                "subsystem dimensions {dims:?} do not multiply to {}",
                f.dimension
            )));
        }
        let mut units = Vec::with_capacity(subs.len());
        for (i, s) in subs.iter().enumerate() {
            match &s.unit_effect {
                Some(u) if u.len() == s.dimension => units.push(u.clone()),
                Some(_) => {
                    return Err(Error::Dimension(format!(
                        "unit effect of subsystem `{}` has wrong length",
                        s.name
                    )))
                }
                None if i == keep_idx => units.push(vec![0.0; s.dimension]),
                None => {
                    return Err(Error::Invalid(format!(
                        "subsystem `{}` has no unit effect to trace with",
                        s.name
                    )))
                }
            }
        }
        Ok(Marginalizer {
            dims,
            units,
            keep: keep_idx,
        })
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            idx[i] = flat % self.dims[i];
            flat /= self.dims[i];
        }
        idx
    }

    /// Contract all discarded factors with `weights` (unit effects for states).
    fn contract(&self, v: &[f64], weights: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims[self.keep]];
        for (flat, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let idx = self.multi_index(flat);
            let mut w = x;
            for (i, &j) in idx.iter().enumerate() {
                if i != self.keep {
                    w *= weights[i][j];
                }
            }
            out[idx[self.keep]] += w;
        }
        out
    }

    pub(crate) fn trace_state(&self, v: &[f64]) -> Vec<f64> {
        self.contract(v, &self.units)
    }

    /// Factor `e = ... ⊗ e_keep ⊗ ...` with unit effects on the other slots.
    fn factor_effect(&self, e: &[f64]) -> Option<Vec<f64>> {
        let scaled: Vec<Vec<f64>> = self
            .units
            .iter()
            .map(|u| {
                let n2 = dot(u, u);
                u.iter().map(|x| if n2 > 0.0 { x / n2 } else { 0.0 }).collect()
            })
            .collect();
        let cand = self.contract(e, &scaled);
        let mut rebuilt = vec![1.0];
        for i in 0..self.dims.len() {
            rebuilt = kron(&rebuilt, if i == self.keep { &cand } else { &self.units[i] });
        }
        let dev = rebuilt
            .iter()
            .zip(e)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        (dev <= FRAGMENT_TOL).then_some(cand)
    }
}

/// Trace out every subsystem except `keep`.
///
/// States are contracted with the discarded unit effects. Effects of the form
/// `e_keep ⊗ u_rest` carry over, as do measurements made only of them.
pub fn partial_trace(f: &Fragment, keep: &str) -> Result<Fragment> {
    let marg = Marginalizer::new(f, keep)?;
    f.check_well_formed()?;
    let subs = f.subsystems.as_ref().ok_or(Error::MissingSubsystems)?;
    let kept = &subs[marg.keep];
    let unit = kept.unit_effect.clone().ok_or_else(|| {
        Error::Invalid(format!("subsystem `{keep}` has no unit effect"))
    })?;
    let states = f
        .states
        .iter()
        .map(|s| GptVector::new(s.label.clone(), marg.trace_state(&s.vector)))
        .collect();
    let effects: Vec<GptVector> = f
        .effects
        .iter()
        .filter_map(|e| {
            marg.factor_effect(&e.vector)
                .map(|v| GptVector::new(e.label.clone(), v))
        })
        .collect();
    let have: HashSet<&str> = effects.iter().map(|e| e.label.as_str()).collect();
    let measurements = f
        .measurements
        .iter()
        .filter(|m| m.effects.iter().all(|l| have.contains(l.as_str())))
        .cloned()
        .collect();
    Ok(Fragment {
        name: format!("tr[{}]({})", keep, f.name),
        dimension: kept.dimension,
        unit_effect: unit,
        states,
        effects,
        measurements,
        subsystems: None,
        extra: Map::new(),
    })
}

/// Label → vector lookup for one side of a fragment.
pub(crate) fn index_by_label(list: &[GptVector]) -> BTreeMap<&str, &[f64]> {
    list.iter()
        .map(|v| (v.label.as_str(), v.vector.as_slice()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{self, ScenarioSpec};
    use proptest::prelude::*;

    fn classical(d: usize) -> Fragment {
        scenarios::simplex(d).unwrap()
    }

    #[test]
    fn scenarios_validate() {
        for spec in [
            ScenarioSpec::QubitStabilizer,
            ScenarioSpec::BoxworldPr,
            ScenarioSpec::BoxworldClassicalMediary,
            ScenarioSpec::Simplex(3),
        ] {
            let f = scenarios::build(&spec).unwrap().fragment;
            let r = validate(&f).unwrap();
            assert!(r.passed, "{}: {}", f.name, r.summary());
        }
    }

    #[test]
    fn doubled_measurement_fails_normalization() {
        let mut f = classical(2);
        for e in &mut f.effects {
            e.vector.iter_mut().for_each(|x| *x *= 2.0);
        }
        let r = validate(&f).unwrap();
        assert!(!r.passed);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::MeasurementNormalization));
        assert!(r.summary().contains("measurement normalization"));
    }

    #[test]
    fn dimension_mismatch_is_an_error_not_a_violation() {
        let mut f = classical(2);
        f.states[0].vector.push(0.0);
        assert!(matches!(validate(&f), Err(Error::Dimension(_))));
    }

    #[test]
    fn missing_effect_and_duplicates_reported() {
        let mut f = classical(2);
        f.measurements[0].effects.push("nope".into());
        f.states.push(f.states[0].clone());
        let r = validate(&f).unwrap();
        let kinds: Vec<_> = r.violations.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::MissingEffect));
        assert!(kinds.contains(&ViolationKind::DuplicateLabel));
    }

    #[test]
    fn pr_prediction_realizes_xor_rule() {
        let f = scenarios::boxworld_pr();
        let t = predict(&f).unwrap();
        // preparations s_{a|x} in order (a,x) = (0,0),(1,0),(0,1),(1,1)
        let ax = [(0, 0), (1, 0), (0, 1), (1, 1)];
        for (i, &(a, x)) in ax.iter().enumerate() {
            for y in 0..2 {
                let b = a ^ (x & y);
                assert_eq!(t.p[i][y][b], 1.0);
                assert_eq!(t.p[i][y][1 - b], 0.0);
            }
        }
    }

    #[test]
    fn simplex_prediction_is_identity() {
        let t = predict(&classical(3)).unwrap();
        for x in 0..3 {
            for b in 0..3 {
                assert_eq!(t.p[x][0][b], if x == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn unit_only_measurement_gives_ones() {
        let mut f = scenarios::boxworld_pr();
        f.effects.push(GptVector::new("unit", f.unit_effect.clone()));
        f.measurements.push(Measurement::new("trivial", vec!["unit".into()]));
        let t = predict(&f).unwrap();
        assert!(t.p.iter().all(|row| (row[2][0] - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bit_times_bit_is_a_four_simplex() {
        let c = tensor(&classical(2), &classical(2)).unwrap();
        assert_eq!(c.dimension, 4);
        assert_eq!(c.states.len(), 4);
        assert!(validate(&c).unwrap().passed);
        let subs = c.subsystems.as_ref().unwrap();
        assert_eq!(subs[0].name, "A");
        assert_eq!(subs[1].dimension, 2);
        for s in &c.states {
            assert!((dot(&c.unit_effect, &s.vector) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pr_times_pointer_contains_notebook_states() {
        let pr = scenarios::boxworld_pr();
        let pointer = classical(4);
        let c = tensor(&pr, &pointer).unwrap();
        assert_eq!(c.dimension, 12);
        for (x, s) in pr.states.iter().enumerate() {
            let label = product_label(&s.label, &pointer.states[x].label);
            let v = c.state(&label).expect("notebook state present");
            assert_eq!(v.vector, kron(&s.vector, &pointer.states[x].vector));
        }
    }

    #[test]
    fn too_large_composite_is_a_limit_error() {
        let big = tensor(&classical(16), &classical(16)).unwrap();
        assert!(tensor(&big, &classical(2)).unwrap_err().is_resource_limit());
    }

    #[test]
    fn trace_of_notebook_states_recovers_system_states() {
        let f = scenarios::lab_notebook(scenarios::NotebookVariant::ReadoutOnSystem).unwrap();
        let t = partial_trace(&f, "S").unwrap();
        let pr = scenarios::boxworld_pr();
        assert_eq!(t.dimension, 3);
        for (a, b) in t.states.iter().zip(&pr.states) {
            assert!(a.vector.iter().zip(&b.vector).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        assert_eq!(t.measurements.len(), 2);
        assert!(validate(&t).unwrap().passed);
    }

    #[test]
    fn trace_of_identical_classical_points() {
        let c = tensor(&classical(2), &classical(2)).unwrap();
        let t = partial_trace(&c, "A").unwrap();
        // state δ0⊗δ0 is the first product
        assert_eq!(t.states[0].vector, vec![1.0, 0.0]);
    }

    #[test]
    fn trace_is_linear_on_mixtures() {
        let pr = scenarios::boxworld_pr();
        let pointer = classical(4);
        let mut c = tensor(&pr, &pointer).unwrap();
        let s1 = kron(&pr.states[0].vector, &pointer.states[0].vector);
        let s2 = kron(&pr.states[1].vector, &pointer.states[1].vector);
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        c.states = vec![GptVector::new("mix", mix)];
        let t = partial_trace(&c, "A").unwrap();
        let expected: Vec<f64> = pr.states[0]
            .vector
            .iter()
            .zip(&pr.states[1].vector)
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        assert!(t.states[0].vector.iter().zip(&expected).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn trace_errors() {
        let f = classical(2);
        assert!(matches!(partial_trace(&f, "A"), Err(Error::MissingSubsystems)));
        let c = tensor(&f, &f).unwrap();
        assert!(matches!(partial_trace(&c, "Z"), Err(Error::UnknownSubsystem(_))));
    }

    #[test]
    fn json_round_trip_keeps_unknown_keys() {
        let mut f = scenarios::boxworld_pr();
        f.extra.insert("origin".into(), Value::String("lab 7".into()));
        f.states[0].extra.insert("note".into(), Value::from(3));
        let text = f.to_json().unwrap();
        let back = Fragment::from_json(&text).unwrap();
        assert_eq!(back, f);
    }

    fn bloch_fragment(states: Vec<(f64, f64)>, effects: Vec<(f64, f64, f64)>) -> Fragment {
        Fragment {
            name: "disk".into(),
            dimension: 3,
            unit_effect: vec![1.0, 0.0, 0.0],
            states: states
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| GptVector::new(format!("s{i}"), vec![1.0, a, b]))
                .collect(),
            effects: effects
                .iter()
                .enumerate()
                .flat_map(|(i, &(t, a, b))| {
                    [
                        GptVector::new(format!("e{i}+"), vec![t, a, b]),
                        GptVector::new(format!("e{i}-"), vec![1.0 - t, -a, -b]),
                    ]
                })
                .collect(),
            measurements: (0..effects.len())
                .map(|i| Measurement::new(format!("m{i}"), vec![format!("e{i}+"), format!("e{i}-")]))
                .collect(),
            subsystems: None,
            extra: Map::new(),
        }
    }

    fn disk_point() -> impl Strategy<Value = (f64, f64)> {
        (0.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| (r * t.cos(), r * t.sin()))
    }

    fn disk_effect() -> impl Strategy<Value = (f64, f64, f64)> {
        (0.0f64..0.5, 0.0f64..std::f64::consts::TAU, 0.0f64..1.0).prop_map(|(r, t, c)| {
            let lo = r;
            let hi = 1.0 - r;
            (lo + c * (hi - lo), r * t.cos(), r * t.sin())
        })
    }

    proptest! {
        #[test]
        fn tensor_predictions_factorize(
            sa in prop::collection::vec(disk_point(), 1..3),
            ea in prop::collection::vec(disk_effect(), 1..3),
            sb in prop::collection::vec(disk_point(), 1..3),
            eb in prop::collection::vec(disk_effect(), 1..3),
        ) {
            let a = bloch_fragment(sa, ea);
            let b = bloch_fragment(sb, eb);
            let c = tensor(&a, &b).unwrap();
            for s1 in &a.states { for s2 in &b.states { for e1 in &a.effects { for e2 in &b.effects {
                let s = c.state(&product_label(&s1.label, &s2.label)).unwrap();
                let e = c.effect(&product_label(&e1.label, &e2.label)).unwrap();
                let lhs = dot(&e.vector, &s.vector);
                let rhs = dot(&e1.vector, &s1.vector) * dot(&e2.vector, &s2.vector);
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }}}}
            let report = validate(&c).unwrap();
            prop_assert!(report.passed, "{}", report.summary());
            let t = predict(&c).unwrap();
            for row in &t.p { for cell in row { for &p in cell {
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(&p));
            }}}
        }

        #[test]
        fn trace_of_products_is_identity_on_kept_factor(
            sa in prop::collection::vec(disk_point(), 1..4),
            sb in prop::collection::vec(disk_point(), 1..4),
        ) {
            let a = bloch_fragment(sa, vec![(0.5, 0.0, 0.0)]);
            let b = bloch_fragment(sb, vec![(0.5, 0.0, 0.0)]);
            let c = tensor(&a, &b).unwrap();
            let ta = partial_trace(&c, "A").unwrap();
            let tb = partial_trace(&c, "B").unwrap();
            for (i, s1) in a.states.iter().enumerate() {
                for (j, s2) in b.states.iter().enumerate() {
                    let k = i * b.states.len() + j;
                    for (x, y) in ta.states[k].vector.iter().zip(&s1.vector) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    }
                    for (x, y) in tb.states[k].vector.iter().zip(&s2.vector) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
