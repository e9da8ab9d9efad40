//! Golden fixtures: the Boxworld PR-box fragment and its classical-mediary
//! twin, the lab-notebook composite, the qubit stabilizer fragment and
//! classical simplices.
//!
//! Boxworld coordinates use the fiducial-probability convention
//! `(1, p(0|y=0), p(0|y=1))`.

use serde_json::Map;

use crate::error::{Error, Result};
use crate::fragment::{
    kron, predict, product_label, Fragment, GptVector, Measurement, StatisticsTable, Subsystem,
};

/// Which effects accompany the lab-notebook composite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NotebookVariant {
    /// Only `e ⊗ u_X`: the system's measurements with the notebook ignored.
    ReadoutOnSystem,
    /// Additionally reads the notebook pointer: `u_S ⊗ δ*_x`.
    WithPointerReadout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioSpec {
    BoxworldPr,
    BoxworldClassicalMediary,
    LabNotebook(NotebookVariant),
    QubitStabilizer,
    Simplex(usize),
}

pub const MAX_SIMPLEX_DIM: usize = 16;

impl ScenarioSpec {
    /// Parse a scenario name such as `boxworld-pr` or `simplex-4`.
    /// `variant` selects the lab-notebook effect set (`a` or `b`).
    pub fn parse(name: &str, variant: Option<&str>) -> Result<ScenarioSpec> {
        let spec = match name {
            "boxworld-pr" => ScenarioSpec::BoxworldPr,
            "boxworld-classical-mediary" => ScenarioSpec::BoxworldClassicalMediary,
            "qubit-stabilizer" => ScenarioSpec::QubitStabilizer,
            "lab-notebook" => ScenarioSpec::LabNotebook(match variant.unwrap_or("a") {
                "a" | "A" => NotebookVariant::ReadoutOnSystem,
                "b" | "B" => NotebookVariant::WithPointerReadout,
                other => {
                    return Err(Error::Invalid(format!("unknown lab-notebook variant `{other}`")))
                }
            }),
            other => match other.strip_prefix("simplex-").map(str::parse::<usize>) {
                Some(Ok(d)) => ScenarioSpec::Simplex(d),
                _ => return Err(Error::UnknownScenario(other.to_string())),
            },
        };
        if let ScenarioSpec::Simplex(d) = spec {
            if d == 0 || d > MAX_SIMPLEX_DIM {
                return Err(Error::Invalid(format!(
                    "simplex dimension must be in 1..={MAX_SIMPLEX_DIM}, got {d}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn name(&self) -> String {
        match self {
            ScenarioSpec::BoxworldPr => "boxworld-pr".into(),
            ScenarioSpec::BoxworldClassicalMediary => "boxworld-classical-mediary".into(),
            ScenarioSpec::LabNotebook(_) => "lab-notebook".into(),
            ScenarioSpec::QubitStabilizer => "qubit-stabilizer".into(),
            ScenarioSpec::Simplex(d) => format!("simplex-{d}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub fragment: Fragment,
    /// Reference outcome statistics, where the scenario defines them.
    pub reference: Option<StatisticsTable>,
}

pub fn build(spec: &ScenarioSpec) -> Result<Scenario> {
    let (fragment, with_reference) = match *spec {
        ScenarioSpec::BoxworldPr => (boxworld_pr(), true),
        ScenarioSpec::BoxworldClassicalMediary => (boxworld_classical_mediary(), true),
        ScenarioSpec::LabNotebook(v) => (lab_notebook(v)?, true),
        ScenarioSpec::QubitStabilizer => (qubit_stabilizer(), true),
        ScenarioSpec::Simplex(d) => (simplex(d)?, false),
    };
    let reference = if with_reference {
        Some(predict(&fragment)?)
    } else {
        None
    };
    Ok(Scenario { fragment, reference })
}

fn vectors(items: &[(&str, Vec<f64>)]) -> Vec<GptVector> {
    items
        .iter()
        .map(|(l, v)| GptVector::new(*l, v.clone()))
        .collect()
}

fn pr_measurements() -> Vec<Measurement> {
    vec![
        Measurement::new("y=0", vec!["e_{0|0}".into(), "e_{1|0}".into()]),
        Measurement::new("y=1", vec!["e_{0|1}".into(), "e_{1|1}".into()]),
    ]
}

/// Alice's steered Boxworld states `s_{a|x}` and Bob's fiducial effects.
pub fn boxworld_pr() -> Fragment {
    Fragment {
        name: "boxworld-pr".into(),
        dimension: 3,
        unit_effect: vec![1.0, 0.0, 0.0],
        states: vectors(&[
            ("s_{0|0}", vec![1.0, 1.0, 1.0]),
            ("s_{1|0}", vec![1.0, 0.0, 0.0]),
            ("s_{0|1}", vec![1.0, 1.0, 0.0]),
            ("s_{1|1}", vec![1.0, 0.0, 1.0]),
        ]),
        effects: vectors(&[
            ("e_{0|0}", vec![0.0, 1.0, 0.0]),
            ("e_{1|0}", vec![1.0, -1.0, 0.0]),
            ("e_{0|1}", vec![0.0, 0.0, 1.0]),
            ("e_{1|1}", vec![1.0, 0.0, -1.0]),
        ]),
        measurements: pr_measurements(),
        subsystems: None,
        extra: Map::new(),
    }
}

/// The PR correlations mediated by a classical register `(a', x, z)`.
///
/// The register is three classical bits (dimension 8); `z` is idle and always
/// prepared in 0, so the prepared states span only four dimensions. Besides
/// Bob's two readouts the fragment carries the register readout `(a', x)`,
/// the effects a classical system always offers.
pub fn boxworld_classical_mediary() -> Fragment {
    let index = |a: usize, x: usize, z: usize| a * 4 + x * 2 + z;
    let point = |i: usize| {
        let mut v = vec![0.0; 8];
        v[i] = 1.0;
        v
    };
    let states = [(0, 0), (1, 0), (0, 1), (1, 1)]
        .iter()
        .map(|&(a, x)| GptVector::new(format!("s_{{{a}|{x}}}"), point(index(a, x, 0))))
        .collect();
    let mut effects = Vec::new();
    for y in 0..2 {
        for b in 0..2 {
            let mut v = vec![0.0; 8];
            for a in 0..2 {
                for x in 0..2 {
                    if a ^ (x & y) == b {
                        for z in 0..2 {
                            v[index(a, x, z)] = 1.0;
                        }
                    }
                }
            }
            effects.push(GptVector::new(format!("e_{{{b}|{y}}}"), v));
        }
    }
    let mut measurements = pr_measurements();
    let mut register = Vec::new();
    for a in 0..2 {
        for x in 0..2 {
            let mut v = vec![0.0; 8];
            v[index(a, x, 0)] = 1.0;
            v[index(a, x, 1)] = 1.0;
            let label = format!("r_{{{a}{x}}}");
            register.push(label.clone());
            effects.push(GptVector::new(label, v));
        }
    }
    measurements.push(Measurement::new("register", register));
    Fragment {
        name: "boxworld-classical-mediary".into(),
        dimension: 8,
        unit_effect: vec![1.0; 8],
        states,
        effects,
        measurements,
        subsystems: None,
        extra: Map::new(),
    }
}

/// Stabilizer states and Pauli measurements of a qubit in Bloch form
/// `(1, r)`, effects `(1 ± n)/2`.
pub fn qubit_stabilizer() -> Fragment {
    let axes = ["x", "y", "z"];
    let mut states = Vec::new();
    let mut effects = Vec::new();
    let mut measurements = Vec::new();
    for (i, ax) in axes.iter().enumerate() {
        for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
            let mut s = vec![1.0, 0.0, 0.0, 0.0];
            s[i + 1] = sign;
            states.push(GptVector::new(format!("{tag}{ax}"), s));
            let mut e = vec![0.5, 0.0, 0.0, 0.0];
            e[i + 1] = 0.5 * sign;
            effects.push(GptVector::new(format!("{}{tag}", ax.to_uppercase()), e));
        }
        let m = ax.to_uppercase();
        measurements.push(Measurement::new(m.clone(), vec![format!("{m}+"), format!("{m}-")]));
    }
    Fragment {
        name: "qubit-stabilizer".into(),
        dimension: 4,
        unit_effect: vec![1.0, 0.0, 0.0, 0.0],
        states,
        effects,
        measurements,
        subsystems: None,
        extra: Map::new(),
    }
}

/// Classical `d`-level system: point states, coordinate readouts, one
/// `d`-outcome measurement.
pub fn simplex(d: usize) -> Result<Fragment> {
    if d == 0 || d > MAX_SIMPLEX_DIM {
        return Err(Error::Invalid(format!(
            "simplex dimension must be in 1..={MAX_SIMPLEX_DIM}, got {d}"
        )));
    }
    let point = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    };
    Ok(Fragment {
        name: format!("simplex-{d}"),
        dimension: d,
        unit_effect: vec![1.0; d],
        states: (0..d).map(|i| GptVector::new(format!("δ_{i}"), point(i))).collect(),
        effects: (0..d).map(|i| GptVector::new(format!("read_{i}"), point(i))).collect(),
        measurements: vec![Measurement::new(
            "readout",
            (0..d).map(|i| format!("read_{i}")).collect(),
        )],
        subsystems: None,
        extra: Map::new(),
    })
}

/// PR states recorded in a four-level classical notebook: `s_x ⊗ δ_x`.
pub fn lab_notebook(variant: NotebookVariant) -> Result<Fragment> {
    let system = boxworld_pr();
    let pointer = simplex(system.states.len())?;
    let u_x = pointer.unit_effect.clone();
    let u_s = system.unit_effect.clone();

    let states = system
        .states
        .iter()
        .zip(&pointer.states)
        .map(|(s, d)| GptVector::new(product_label(&s.label, &d.label), kron(&s.vector, &d.vector)))
        .collect();
    let mut effects: Vec<GptVector> = system
        .effects
        .iter()
        .map(|e| GptVector::new(product_label(&e.label, "u_X"), kron(&e.vector, &u_x)))
        .collect();
    let mut measurements: Vec<Measurement> = system
        .measurements
        .iter()
        .map(|m| {
            Measurement::new(
                m.label.clone(),
                m.effects.iter().map(|l| product_label(l, "u_X")).collect(),
            )
        })
        .collect();
    if variant == NotebookVariant::WithPointerReadout {
        let mut labels = Vec::new();
        for r in &pointer.effects {
            let label = product_label("u_S", &r.label);
            effects.push(GptVector::new(label.clone(), kron(&u_s, &r.vector)));
            labels.push(label);
        }
        measurements.push(Measurement::new("notebook", labels));
    }
    let name = match variant {
        NotebookVariant::ReadoutOnSystem => "lab-notebook",
        NotebookVariant::WithPointerReadout => "lab-notebook-b",
    };
    Ok(Fragment {
        name: name.into(),
        dimension: system.dimension * pointer.dimension,
        unit_effect: kron(&u_s, &u_x),
        states,
        effects,
        measurements,
        subsystems: Some(vec![
            Subsystem {
                name: "S".into(),
                dimension: system.dimension,
                unit_effect: Some(u_s),
                extra: Map::new(),
            },
            Subsystem {
                name: "X".into(),
                dimension: pointer.dimension,
                unit_effect: Some(u_x),
                extra: Map::new(),
            },
        ]),
        extra: Map::new(),
    })
}

/// CHSH-style success probability of a table over the PR preparations
/// `s_{a|x}` (ordered (0,0),(1,0),(0,1),(1,1)) and measurements `y`:
/// the average probability of `b = a ⊕ x·y`.
pub fn pr_success(table: &StatisticsTable) -> f64 {
    let ax = [(0usize, 0usize), (1, 0), (0, 1), (1, 1)];
    let mut total = 0.0;
    for (i, &(a, x)) in ax.iter().enumerate() {
        for y in 0..2 {
            total += table.p[i][y][a ^ (x & y)];
        }
    }
    total / 8.0
}
