use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn degshoot(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degshoot")).args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shoot_exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = degshoot(&["shoot", "lane-emden", "--n", "3", "--k", "1", "--p", "5", "--q", "5", "--alpha", "1,1"], &d.join("le"));
    assert_eq!(code(&o), 0);
    assert_eq!(json(&d.join("le/outcome.json"))["kind"], "GlobalCandidate");

    let o = degshoot(&["shoot", "scalar-poly", "--n", "3", "--k", "1", "--p", "3", "--alpha", "1"], &d.join("sub"));
    assert_eq!(code(&o), 0);
    let out = json(&d.join("sub/outcome.json"));
    assert_eq!(out["kind"], "WallHit");
    assert!((out["r0"].as_f64().unwrap() - 6.896848619376912).abs() < 1e-8);

    let o = degshoot(&["shoot", "lane-emden", "--alpha", "0,1"], &d.join("edge"));
    assert_eq!(code(&o), 0);
    let out = json(&d.join("edge/outcome.json"));
    assert_eq!(out["kind"], "WallHit");
    assert_eq!(out["r0"].as_f64(), Some(0.0));
    assert_eq!(out["i0"].as_u64(), Some(0));

    let o = degshoot(&["shoot", "scalar-poly", "--p", "5", "--alpha", "1", "--r-max", "2"], &d.join("short"));
    assert_eq!(code(&o), 2);
    assert_eq!(json(&d.join("short/outcome.json"))["kind"], "Undetermined");
}

#[test]
fn errors_exit_one_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = degshoot(&["solve", "lane-emden", "--a", "0"], &d.join("a0"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = degshoot(&["shoot", "lane-emden"], &d.join("noalpha"));
    assert_eq!(code(&o), 1);

    let o = degshoot(&["shoot", "no-such-system", "--alpha", "1"], &d.join("unknown"));
    assert_eq!(code(&o), 1);

    let cfg = d.join("bad.json");
    fs::write(&cfg, r#"{"controls": {"tolerance": 1}}"#).unwrap();
    let o = degshoot(&["shoot", "--alpha", "1,1", "--config", cfg.to_str().unwrap()], &d.join("bad"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    let o = degshoot(&["shoot", "--bogus-flag"], &d.join("flag"));
    assert_eq!(code(&o), 1);
}

#[test]
fn solve_writes_certificate_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("bih");
    let o = degshoot(&["solve", "scalar-poly", "--n", "5", "--k", "2", "--p", "9", "--a", "1"], &d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = json(&d.join("certificate.json"));
    assert_eq!(cert["alpha_star"].as_array().unwrap().len(), 2);
    assert!(json(&d.join("verify.json"))["residual_max"].as_f64().unwrap() < 1e-5);
    let trace = fs::read_to_string(d.join("trace.jsonl")).unwrap();
    let depths: Vec<u64> =
        trace.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["depth"].as_u64().unwrap()).collect();
    assert!(!depths.is_empty());
    assert_eq!(depths[0], 0);
    assert!(fs::read_to_string(d.join("trajectory.csv")).unwrap().starts_with("r,u1,u2,du1,du2\n"));
}

#[test]
fn depth_budget_and_verification_failures_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = degshoot(
        &["solve", "scalar-poly", "--n", "5", "--k", "2", "--p", "9", "--max-depth", "3", "--diam-tol", "1e-12"],
        &d.join("shallow"),
    );
    assert_eq!(code(&o), 3);
    let cert = json(&d.join("shallow/certificate.json"));
    assert_eq!(cert["termination"], "depth_limit");

    let o = degshoot(&["verify", "scalar-poly", "--p", "5", "--alpha", "1", "--residual-tol", "1e-30"], &d.join("strict"));
    assert_eq!(code(&o), 4);
    let o = degshoot(&["verify", "scalar-poly", "--p", "5", "--alpha", "1"], &d.join("loose"));
    assert_eq!(code(&o), 0);
    assert!(json(&d.join("loose/verify.json"))["exact_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn criticality_prints_the_regime() {
    let dir = tempfile::tempdir().unwrap();
    let regime = |args: &[&str]| {
        let mut all = vec!["criticality"];
        all.extend_from_slice(args);
        let o = degshoot(&all, dir.path());
        assert_eq!(code(&o), 0);
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["regime"].as_str().unwrap().to_string()
    };
    assert_eq!(regime(&["--n", "3", "--k", "1", "--p", "5", "--q", "5"]), "critical");
    assert_eq!(regime(&["--n", "3", "--k", "1", "--p", "3", "--q", "3"]), "subcritical");
    assert_eq!(regime(&["--n", "5", "--k", "2", "--p", "10", "--q", "10"]), "supercritical");
    let o = degshoot(&["criticality", "--n", "2", "--k", "1"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn effective_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["sweep", "scalar-poly", "--n", "5", "--k", "2", "--p", "9", "--resolution", "41", "--rel-tol", "1e-9"];
    assert_eq!(code(&degshoot(&args, &d.join("first"))), 0);
    let cfg = d.join("first/config.json");
    let o = degshoot(&["sweep", "--config", cfg.to_str().unwrap(), "--workers", "1"], &d.join("again"));
    assert_eq!(code(&o), 0);
    let a = fs::read(d.join("first/sweep.csv")).unwrap();
    let b = fs::read(d.join("again/sweep.csv")).unwrap();
    assert_eq!(a, b);

    let args = ["shoot", "lane-emden", "--p", "3", "--q", "4", "--alpha", "0.7,1.3"];
    assert_eq!(code(&degshoot(&args, &d.join("s1"))), 0);
    let cfg = d.join("s1/config.json");
    assert_eq!(code(&degshoot(&["shoot", "--config", cfg.to_str().unwrap()], &d.join("s2"))), 0);
    assert_eq!(fs::read(d.join("s1/trajectory.csv")).unwrap(), fs::read(d.join("s2/trajectory.csv")).unwrap());
}

#[test]
fn critical_biharmonic_sweep_changes_label_once_around_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("sw");
    let o = degshoot(&["sweep", "scalar-poly", "--n", "5", "--k", "2", "--p", "9", "--resolution", "101"], &d);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "alpha1,alpha2,outcome,i0,r0,psi1,psi2");
    let hits: Vec<(f64, i64)> = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|row| row[2] == "WallHit")
        .map(|row| (row[0].parse().unwrap(), row[3].parse().unwrap()))
        .collect();
    let changes: Vec<usize> = (1..hits.len()).filter(|&j| hits[j].1 != hits[j - 1].1).collect();
    assert_eq!(changes.len(), 1, "{hits:?}");
    let j = changes[0];
    // bisection value of the root along the edge
    let root = 0.8195706190048506;
    assert!(hits[j - 1].0 < root && root < hits[j].0);
    assert_eq!(hits[0], (0.0, 0));
}
