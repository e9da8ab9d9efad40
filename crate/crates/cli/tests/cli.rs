use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn nctk(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_nctk"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn nctk");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(bytes) = stdin {
            pipe.write_all(bytes).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn scenario(name: &str) -> Vec<u8> {
    let o = nctk(&["scenario", name], None);
    assert!(o.status.success());
    o.stdout
}

#[test]
fn pr_box_is_not_embeddable() {
    let o = nctk(&["embed"], Some(&scenario("boxworld-pr")));
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["verdict"], "not_embeddable");
    assert!((v["r_star"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(v["violated_inequality"]["bound"].is_number());
}

#[test]
fn simplex_is_embeddable_with_zero_robustness() {
    let o = nctk(&["embed"], Some(&scenario("simplex-4")));
    let v = json(&o);
    assert_eq!(v["verdict"], "embeddable");
    assert_eq!(v["r_star"].as_f64(), Some(0.0));
    assert!(v["model"]["mu"].is_array());
}

#[test]
fn malformed_input_exits_two_with_report() {
    let o = nctk(&["embed"], Some(b"{ not json"));
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["report"]["status"], "error");
    assert_eq!(v["report"]["error"]["kind"], "input");
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_flags_are_rejected() {
    let o = nctk(&["embed", "--frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_composite_exits_three() {
    let dir = std::env::temp_dir().join(format!("nctk-limit-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let big = dir.join("big.json");
    let small = dir.join("small.json");
    std::fs::write(&small, scenario("simplex-2")).unwrap();
    let s16 = dir.join("s16.json");
    std::fs::write(&s16, scenario("simplex-16")).unwrap();
    let o = nctk(&["tensor", s16.to_str().unwrap(), s16.to_str().unwrap()], None);
    assert!(o.status.success());
    std::fs::write(&big, &o.stdout).unwrap();
    let o = nctk(&["tensor", big.to_str().unwrap(), small.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["report"]["error"]["kind"], "resource_limit");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn defaults_and_overrides_are_echoed() {
    let o = nctk(&["validate"], Some(&scenario("boxworld-pr")));
    let t = &json(&o)["report"]["tolerances"];
    assert_eq!(t["rank"].as_f64(), Some(1e-9));
    assert_eq!(t["lp"].as_f64(), Some(1e-8));
    assert_eq!(t["bisection"].as_f64(), Some(1e-6));
    let o = nctk(&["validate", "--tol", "1e-7"], Some(&scenario("boxworld-pr")));
    let v = json(&o);
    assert_eq!(v["report"]["tolerances"]["rank"].as_f64(), Some(1e-7));
    assert_eq!(v["passed"], true);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let f = scenario("qubit-stabilizer");
    let a = nctk(&["tomo-synth", "--seed", "7", "--trials", "1000"], Some(&f));
    let b = nctk(&["tomo-synth", "--seed", "7", "--trials", "1000"], Some(&f));
    let c = nctk(&["tomo-synth", "--seed", "8", "--trials", "1000"], Some(&f));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let e1 = nctk(&["embed"], Some(&f));
    let e2 = nctk(&["embed"], Some(&f));
    assert_eq!(e1.stdout, e2.stdout);
}

#[test]
fn outputs_feed_the_next_subcommand() {
    let dir = std::env::temp_dir().join(format!("nctk-compose-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let frag = p("pr.json");
    let stats = p("stats.json");
    let mem = p("membership.json");
    assert!(nctk(&["scenario", "boxworld-pr", "-o", &frag], None).status.success());
    assert!(nctk(&["predict", &frag, "-o", &stats], None).status.success());
    let o = nctk(&["membership", &frag, "--stats", &stats, "-o", &mem], None);
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&mem).unwrap()).unwrap();
    assert_eq!(m["verdict"], "infeasible");
    let e = json(&nctk(&["evaluate", &stats, "--inequality", &mem], None));
    assert!((e["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((e["bound"].as_f64().unwrap() - 0.75).abs() < 1e-9);
    assert_eq!(e["violated"], true);

    let ids = p("ids.json");
    assert!(nctk(&["identities", &frag, "-o", &ids], None).status.success());
    let o = nctk(&["membership", &frag, "--identities", &ids], None);
    assert_eq!(json(&o)["verdict"], "infeasible");

    let counts = p("counts.json");
    let fitted = p("fitted.json");
    assert!(nctk(&["tomo-synth", &frag, "--seed", "1", "-o", &counts], None).status.success());
    assert!(nctk(&["tomo-fit", &counts, "-o", &fitted], None).status.success());
    let v = json(&nctk(&["embed", &fitted], None));
    assert_eq!(v["verdict"], "not_embeddable");
    let v = json(&nctk(&["pipeline", &counts], None));
    assert_eq!(v["verdict"], "not_embeddable");
    assert_eq!(v["dimension"], 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn secondary_states_of_perturbed_pr() {
    let o = nctk(&["secondary", "--perturb", "0.02", "--seed", "4"], Some(&scenario("boxworld-pr")));
    let v = json(&o);
    assert_eq!(v["status"], "solved");
    let w: Vec<f64> = v["primary_weight"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(w.iter().sum::<f64>() / w.len() as f64 >= 0.95);
}

#[test]
fn marginalized_notebook_identities() {
    let nb = nctk(&["scenario", "lab-notebook"], None).stdout;
    let v = json(&nctk(&["identities", "--keep", "S"], Some(&nb)));
    let ids = v["identities"].as_array().unwrap();
    assert_eq!(ids.len(), 1);
    assert_eq!(ids[0]["keep_subsystem"], "S");
    let bare = json(&nctk(&["identities", "--side", "states"], Some(&nb)));
    assert!(bare["identities"].as_array().unwrap().is_empty());
}

#[test]
fn geometry_is_optional() {
    let f = scenario("qubit-stabilizer");
    assert!(json(&nctk(&["embed"], Some(&f))).get("geometry").is_none());
    let g = json(&nctk(&["embed", "--emit-geometry"], Some(&f)));
    assert_eq!(g["geometry"]["axes"], 3);
    assert_eq!(g["geometry"]["points"].as_array().unwrap().len(), 6);
}

#[test]
fn unknown_scenario() {
    let o = nctk(&["scenario", "qutrit-magic"], None);
    assert_eq!(o.status.code(), Some(2));
}
