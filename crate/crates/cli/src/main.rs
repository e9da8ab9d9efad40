//! `nctk`: file-based front end to the contextuality toolkit.
//!
//! Every run writes one JSON document. Data-producing subcommands write the
//! data itself with an extra `report` key, so their output feeds straight
//! into the subcommands that consume it.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use nctk_core::embed::{self, ACCESS_TOL, BISECTION_TOL};
use nctk_core::fragment::{self, Fragment, Side, StatisticsTable};
use nctk_core::identities::{self, OperationalIdentity};
use nctk_core::lincone::DEFAULT_RANK_TOL;
use nctk_core::ncpoly::{self, NoncontextualityInequality};
use nctk_core::optim::LP_TOL;
use nctk_core::robustify;
use nctk_core::scenarios::{self, ScenarioSpec};
use nctk_core::tomo::{self, CountTable};
use nctk_core::Error;

#[derive(Parser, Debug)]
#[command(name = "nctk", version, about = "Simplex-embedding and noncontextuality analysis of GPT fragments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the report here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Rank tolerance for spans, identities and validation.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Stopping width of the bisection robustness search.
    #[arg(long, global = true)]
    bisection_tol: Option<f64>,

    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SideArg {
    States,
    Effects,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a fragment's invariants.
    Validate {
        #[arg(default_value = "-")]
        fragment: String,
    },
    /// Tabulate the fragment's outcome probabilities.
    Predict {
        #[arg(default_value = "-")]
        fragment: String,
    },
    /// Canonical operational identities of a fragment.
    Identities {
        #[arg(default_value = "-")]
        fragment: String,
        #[arg(long, value_enum, default_value_t = SideArg::Both)]
        side: SideArg,
        /// Report identities induced on this subsystem by marginalization.
        #[arg(long)]
        keep: Option<String>,
    },
    /// Simplex-embeddability verdict with certificate and robustness.
    Embed {
        #[arg(default_value = "-")]
        fragment: String,
        /// Add accessible state coordinates (at most three axes) for plotting.
        #[arg(long)]
        emit_geometry: bool,
    },
    /// Depolarizing robustness by the single LP and by bisection.
    Robustness {
        #[arg(default_value = "-")]
        fragment: String,
    },
    /// Noncontextual-model membership of outcome statistics.
    Membership {
        #[arg(default_value = "-")]
        fragment: String,
        /// Statistics to test; defaults to the fragment's predictions.
        #[arg(long)]
        stats: Option<String>,
        /// Identities to impose; defaults to the full bases among the
        /// fragment's accessible vectors.
        #[arg(long)]
        identities: Option<String>,
    },
    /// Evaluate a noncontextuality inequality on statistics.
    Evaluate {
        #[arg(default_value = "-")]
        stats: String,
        /// File holding the inequality, or any report that contains one.
        #[arg(long)]
        inequality: String,
    },
    /// Secondary procedures that satisfy target identities exactly.
    Secondary {
        #[arg(default_value = "-")]
        fragment: String,
        /// Target identities; defaults to those of the fragment itself.
        #[arg(long)]
        targets: Option<String>,
        #[arg(long, value_enum, default_value_t = SideArg::States)]
        side: SideArg,
        /// Perturb the realized vectors with this seeded amplitude first.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Synthetic counts drawn from a fragment.
    TomoSynth {
        #[arg(default_value = "-")]
        fragment: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Fit a GPT fragment to counts.
    TomoFit {
        #[arg(default_value = "-")]
        counts: String,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
    },
    /// Counts to fitted fragment to verdict.
    Pipeline {
        #[arg(default_value = "-")]
        counts: String,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
    },
    /// Emit a built-in fragment.
    Scenario {
        name: String,
        /// Lab-notebook effect set (`a` or `b`).
        #[arg(long)]
        variant: Option<String>,
        /// Emit the reference statistics instead of the fragment.
        #[arg(long)]
        stats: bool,
    },
    /// Composite of two fragments.
    Tensor {
        left: String,
        right: String,
        /// Subsystem names, as `A,B`.
        #[arg(long)]
        names: Option<String>,
    },
    /// Partial trace onto one subsystem.
    Marginalize {
        #[arg(default_value = "-")]
        fragment: String,
        #[arg(long)]
        keep: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Predict { .. } => "predict",
            Command::Identities { .. } => "identities",
            Command::Embed { .. } => "embed",
            Command::Robustness { .. } => "robustness",
            Command::Membership { .. } => "membership",
            Command::Evaluate { .. } => "evaluate",
            Command::Secondary { .. } => "secondary",
            Command::TomoSynth { .. } => "tomo-synth",
            Command::TomoFit { .. } => "tomo-fit",
            Command::Pipeline { .. } => "pipeline",
            Command::Scenario { .. } => "scenario",
            Command::Tensor { .. } => "tensor",
            Command::Marginalize { .. } => "marginalize",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_resource_limit() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Core(e) if e.is_resource_limit() => "resource_limit",
            _ => "input",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Input(m) => m.clone(),
        }
    }
}

type Outcome = std::result::Result<Value, Failure>;

struct Ctx {
    rank_tol: f64,
    bisection_tol: f64,
    seed: u64,
}

fn read_input(path: &str) -> std::result::Result<String, Failure> {
    if path == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("reading standard input: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("reading {path}: {e}")))
    }
}

fn parse_json(path: &str) -> std::result::Result<Value, Failure> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{path}: malformed JSON: {e}")))
}

fn load<T: serde::de::DeserializeOwned>(path: &str, what: &str) -> std::result::Result<T, Failure> {
    let v = parse_json(path)?;
    serde_json::from_value(v).map_err(|e| Failure::Input(format!("{path}: not a {what}: {e}")))
}

fn load_fragment(path: &str) -> std::result::Result<Fragment, Failure> {
    let f: Fragment = load(path, "fragment")?;
    f.check_well_formed()?;
    Ok(f)
}

fn load_counts(path: &str) -> std::result::Result<CountTable, Failure> {
    let c: CountTable = load(path, "count table")?;
    c.check()?;
    Ok(c)
}

/// A bare list of identities, or any object holding one under `identities`.
fn load_identities(path: &str) -> std::result::Result<Vec<OperationalIdentity>, Failure> {
    let v = parse_json(path)?;
    let list = match v {
        Value::Array(_) => v,
        Value::Object(mut m) => m
            .remove("identities")
            .ok_or_else(|| Failure::Input(format!("{path}: no identities found")))?,
        _ => return Err(Failure::Input(format!("{path}: no identities found"))),
    };
    Ok(identities::identities_from_json(&list.to_string())?)
}

/// The first object with `coefficients` and `bound`, searched depth first.
fn find_inequality(v: &Value) -> Option<NoncontextualityInequality> {
    match v {
        Value::Object(m) => {
            if m.contains_key("coefficients") && m.contains_key("bound") {
                if let Ok(i) = serde_json::from_value(v.clone()) {
                    return Some(i);
                }
            }
            m.values().find_map(find_inequality)
        }
        Value::Array(a) => a.iter().find_map(find_inequality),
        _ => None,
    }
}

fn to_value<T: Serialize>(t: &T) -> Outcome {
    serde_json::to_value(t).map_err(|e| Failure::Core(Error::Json(e)))
}

fn fragment_ids(f: &Fragment, side: Side, tol: f64) -> nctk_core::Result<Vec<OperationalIdentity>> {
    if f.vectors(side).len() + usize::from(side == Side::Effects) < 2 {
        return Ok(Vec::new());
    }
    identities::find_identities(f, side, tol)
}

fn geometry(af: &embed::AccessibleFragment) -> Value {
    let axes = af.dimension.saturating_sub(1).min(3);
    let points: Vec<Value> = af
        .states
        .iter()
        .map(|s| json!({ "label": s.label, "coords": s.vector[1..=axes].to_vec() }))
        .collect();
    json!({ "axes": axes, "points": points })
}

fn run(cmd: &Command, ctx: &Ctx) -> Outcome {
    match cmd {
        Command::Validate { fragment } => {
            let f = load_fragment(fragment)?;
            to_value(&fragment::validate(&f)?)
        }
        Command::Predict { fragment } => {
            let f = load_fragment(fragment)?;
            to_value(&fragment::predict(&f)?)
        }
        Command::Identities {
            fragment,
            side,
            keep,
        } => {
            let f = load_fragment(fragment)?;
            let mut ids = Vec::new();
            if let Some(k) = keep {
                ids = identities::induced_marginal_identities_tol(&f, k, ctx.rank_tol)?;
            } else {
                if *side != SideArg::Effects {
                    ids.extend(fragment_ids(&f, Side::States, ctx.rank_tol)?);
                }
                if *side != SideArg::States {
                    ids.extend(fragment_ids(&f, Side::Effects, ctx.rank_tol)?);
                }
            }
            Ok(json!({ "fragment": f.name, "identities": to_value(&ids)? }))
        }
        Command::Embed {
            fragment,
            emit_geometry,
        } => {
            let f = load_fragment(fragment)?;
            let mut v = to_value(&embed::analyze(&f)?)?;
            if *emit_geometry {
                let af = embed::accessibilize(&f)?;
                v["geometry"] = geometry(&af);
            }
            Ok(v)
        }
        Command::Robustness { fragment } => {
            let f = load_fragment(fragment)?;
            let af = embed::accessibilize(&f)?;
            let single = embed::robustness(&af)?;
            let bis = embed::robustness_by_bisection(&af, ctx.bisection_tol)?;
            Ok(json!({
                "fragment": f.name,
                "r_star": single.r_star,
                "noise_center": single.noise_center,
                "bisection": to_value(&bis)?,
            }))
        }
        Command::Membership {
            fragment,
            stats,
            identities,
        } => {
            let f = load_fragment(fragment)?;
            let table = match stats {
                Some(p) => {
                    let t: StatisticsTable = load(p, "statistics table")?;
                    t
                }
                None => fragment::predict(&f)?,
            };
            let (sids, eids) = match identities {
                Some(p) => {
                    let all = load_identities(p)?;
                    let (s, e): (Vec<_>, Vec<_>) =
                        all.into_iter().partition(|i| i.side == Side::States);
                    let e = if e.is_empty() {
                        ncpoly::accessible_identities(&f)?.1
                    } else {
                        e
                    };
                    (s, e)
                }
                None => ncpoly::accessible_identities(&f)?,
            };
            let vertices = ncpoly::response_vertices(&eids, &f.measurements)?;
            let m = ncpoly::membership(&table, &sids, &vertices)?;
            let mut v = to_value(&m)?;
            v["response_vertices"] = json!(vertices.len());
            Ok(v)
        }
        Command::Evaluate { stats, inequality } => {
            let t: StatisticsTable = load(stats, "statistics table")?;
            let src = parse_json(inequality)?;
            let ineq = find_inequality(&src)
                .ok_or_else(|| Failure::Input(format!("{inequality}: no inequality found")))?;
            to_value(&ncpoly::evaluate(&ineq, &t)?)
        }
        Command::Secondary {
            fragment,
            targets,
            side,
            perturb,
        } => {
            let f = load_fragment(fragment)?;
            let side = match side {
                SideArg::States => Side::States,
                SideArg::Effects => Side::Effects,
                SideArg::Both => {
                    return Err(Failure::Input("secondary takes one side at a time".into()))
                }
            };
            let targets = match targets {
                Some(p) => load_identities(p)?
                    .into_iter()
                    .filter(|i| i.side == side)
                    .collect(),
                None => fragment_ids(&f, side, ctx.rank_tol)?,
            };
            let out = match side {
                Side::States => {
                    let realized = if *perturb > 0.0 {
                        robustify::radial_perturbation(&f.states, *perturb, ctx.seed)
                    } else {
                        f.states.clone()
                    };
                    robustify::secondary_states(&realized, &targets)?
                }
                Side::Effects => {
                    let realized = if *perturb > 0.0 {
                        robustify::effect_perturbation(&f.effects, *perturb, ctx.seed)
                    } else {
                        f.effects.clone()
                    };
                    robustify::secondary_effects(&realized, &f.unit_effect, &targets)?
                }
            };
            to_value(&out)
        }
        Command::TomoSynth { fragment, trials } => {
            let f = load_fragment(fragment)?;
            to_value(&tomo::synth(&f, *trials, ctx.seed)?)
        }
        Command::TomoFit { counts, max_dim } => {
            let c = load_counts(counts)?;
            let r = tomo::fit(&c, *max_dim)?;
            let mut v = to_value(&r.fragment)?;
            let mut fit = to_value(&r)?;
            if let Value::Object(m) = &mut fit {
                m.remove("fragment");
            }
            v["fit"] = fit;
            Ok(v)
        }
        Command::Pipeline { counts, max_dim } => {
            let c = load_counts(counts)?;
            to_value(&tomo::verdict_pipeline(&c, *max_dim)?)
        }
        Command::Scenario {
            name,
            variant,
            stats,
        } => {
            let spec = ScenarioSpec::parse(name, variant.as_deref())?;
            let s = scenarios::build(&spec)?;
            if *stats {
                match s.reference {
                    Some(t) => to_value(&t),
                    None => to_value(&fragment::predict(&s.fragment)?),
                }
            } else {
                to_value(&s.fragment)
            }
        }
        Command::Tensor { left, right, names } => {
            let a = load_fragment(left)?;
            let b = load_fragment(right)?;
            let f = match names {
                Some(n) => {
                    let (na, nb) = n
                        .split_once(',')
                        .ok_or_else(|| Failure::Input("--names takes `A,B`".into()))?;
                    fragment::tensor_named(&a, &b, na, nb)?
                }
                None => fragment::tensor(&a, &b)?,
            };
            to_value(&f)
        }
        Command::Marginalize { fragment, keep } => {
            let f = load_fragment(fragment)?;
            to_value(&fragment::partial_trace(&f, keep)?)
        }
    }
}

fn report(cli: &Cli, ctx: &Ctx, status: &str) -> Value {
    json!({
        "tool": "nctk",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "status": status,
        "seed": ctx.seed,
        "tolerances": {
            "rank": ctx.rank_tol,
            "lp": LP_TOL,
            "bisection": ctx.bisection_tol,
            "access": ACCESS_TOL,
        },
    })
}

fn emit(cli: &Cli, doc: &Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    text.push('\n');
    match &cli.output {
        Some(p) => fs::write(p, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        rank_tol: cli.tol.unwrap_or(DEFAULT_RANK_TOL),
        bisection_tol: cli.bisection_tol.unwrap_or(BISECTION_TOL),
        seed: cli.seed,
    };
    let bad_tol = [ctx.rank_tol, ctx.bisection_tol]
        .iter()
        .any(|t| !(t.is_finite() && *t > 0.0));
    let result = if bad_tol {
        Err(Failure::Input("tolerances must be positive and finite".into()))
    } else {
        run(&cli.command, &ctx)
    };
    let (doc, code) = match result {
        Ok(payload) => {
            let mut doc = match payload {
                Value::Object(m) => Value::Object(m),
                other => json!({ "result": other }),
            };
            doc["report"] = report(&cli, &ctx, "ok");
            (doc, 0)
        }
        Err(f) => {
            eprintln!("nctk {}: {}", cli.command.name(), f.message());
            let mut r = report(&cli, &ctx, "error");
            r["error"] = json!({ "kind": f.kind(), "message": f.message() });
            let mut m = Map::new();
            m.insert("report".into(), r);
            (Value::Object(m), f.exit_code())
        }
    };
    if let Err(e) = emit(&cli, &doc) {
        eprintln!("nctk: writing report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
