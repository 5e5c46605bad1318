use std::path::Path;
use std::process::{Command, Output};

use geoflow::registry::get_example;
use serde_json::{json, Value};

fn geoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoflow")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    geoflow(args).status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn spec_json(id: &str) -> Value {
    serde_json::to_value(get_example(id).unwrap().spec).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.display().to_string()
}

#[test]
fn list_and_help_succeed() {
    let out = geoflow(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["ex0-family", "ex1-implicit", "ex9-explicit", "liouville-n2"] {
        assert!(text.contains(id), "{id} missing from list");
    }
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(code(&["verify", "--example", "nope"]), 2);
    assert_eq!(code(&["verify", "--example", "ex2-explicit", "--set", "k"]), 2);
    assert_eq!(code(&["verify", "--example", "ex1-implicit", "--set", "zz=1"]), 2);
    assert_eq!(code(&["verify"]), 2);
    assert_eq!(code(&["verify", "--example", "ex2-explicit", "--bogus"]), 2);
    assert_eq!(code(&["solve", "--example", "ex2-explicit"]), 2);
    assert_eq!(code(&["solve", "--example", "ex1-implicit", "--grid", "0,1,2"]), 2);
    assert_eq!(code(&["verify", "--example", "ex0-family", "--param", "n=7"]), 2);
    assert_eq!(code(&["verify", "--config", "/nonexistent/file.json"]), 2);
    assert_eq!(
        code(&["geodesic", "--example", "ex2-explicit", "--state", "0,0,1,0"]),
        2,
        "start on the singular locus"
    );
}

#[test]
fn verify_explicit_and_family_entries() {
    for args in [
        vec!["verify", "--example", "ex2-explicit"],
        vec!["verify", "--example", "ex9-explicit"],
        vec!["verify", "--example", "ex0-family", "--param", "n=3"],
        vec!["verify", "--example", "n1-family"],
        vec!["verify", "--example", "ex5-implicit"],
    ] {
        let out = geoflow(&args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn wrong_integral_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = spec_json("ex2-explicit");
    spec["integrals"] = json!([{ "name": "F", "coefficients": ["1", "0"] }]);
    spec["expected_verdict"] = Value::Null;
    let cfg = write_config(dir.path(), "bad.json", &spec);
    let out_dir = dir.path().join("out");
    let out = out_dir.display().to_string();
    assert_eq!(code(&["verify", "--config", &cfg, "--out", &out]), 1);
    let report = read_json(&out_dir.join("verify.json"));
    assert_eq!(report["passed"], json!(false));
}

#[test]
fn solve_writes_grid_and_summary() {
    for id in ["ex1-implicit", "ex6-implicit", "ex8-implicit"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        let res = geoflow(&["solve", "--example", id, "--out", &out]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "{id}: {}",
            String::from_utf8_lossy(&res.stdout)
        );
        let csv = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
        let mut lines = csv.split("\r\n");
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,x,a0,a1,a2"), "{header}");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        let mantissa = first[0].split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{}", first[0]);
        assert_eq!(csv.split("\r\n").filter(|l| !l.is_empty()).count(), 1 + 21 * 21);
        let summary = read_json(&dir.path().join("summary.json"));
        assert_eq!(summary["example"], json!(id));
        assert!(dir.path().join("run_config.json").exists());
    }
}

#[test]
fn solve_across_a_fold_reports_failure() {
    let out = geoflow(&[
        "solve",
        "--example",
        "ex1-implicit",
        "--grid",
        "-0.2,0.2,-1.7,-1.3,21,21",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn geodesic_runs_conserve_integrals() {
    for (id, state) in [("ex2-explicit", "1,1,0.7,-0.3"), ("ex9-explicit", "0,0,1,0.5")] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        assert_eq!(
            code(&["geodesic", "--example", id, "--state", state, "--out", &out]),
            0,
            "{id}"
        );
        let report = read_json(&dir.path().join("geodesic.json"));
        assert_eq!(report["termination"], json!("completed"));
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(traj.starts_with("t,u1,u2,p1,p2,H,F\r\n"), "{}", &traj[..40]);
        assert_eq!(traj.split("\r\n").filter(|l| !l.is_empty()).count(), 102);
    }
}

#[test]
fn zero_length_geodesic_has_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let args = [
        "geodesic",
        "--example",
        "ex2-explicit",
        "--state",
        "1,1,0.7,-0.3",
        "--t-end",
        "0",
        "--out",
        &out,
    ];
    assert_eq!(code(&args), 0);
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.split("\r\n").filter(|l| !l.is_empty()).count(), 2);
}

#[test]
fn criterion_verdicts() {
    for id in ["ex2-explicit", "ex9-explicit"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        assert_eq!(code(&["criterion", "--example", id, "--out", &out]), 0, "{id}");
        let report = read_json(&dir.path().join("criterion.json"));
        assert_eq!(report["report"]["verdict"], json!("obstructed"), "{id}");
    }

    let dir = tempfile::tempdir().unwrap();
    let mut spec = spec_json("ex2-explicit");
    spec["id"] = json!("conformal");
    spec["metric"] = json!({ "g11": "exp(x)", "g12": "0", "g22": "exp(x)" });
    spec["integrals"] = json!([{ "name": "F", "coefficients": ["0", "1"] }]);
    spec["region"]["singular_loci"] = json!([]);
    spec["curvature"] = Value::Null;
    spec["expected_verdict"] = json!("consistent_with_linear_integral");
    spec["degree"] = json!(1);
    let cfg = write_config(dir.path(), "conformal.json", &spec);
    let out = dir.path().join("out");
    assert_eq!(
        code(&["criterion", "--config", &cfg, "--out", &out.display().to_string()]),
        0
    );
    let report = read_json(&out.join("criterion.json"));
    assert_eq!(report["report"]["verdict"], json!("consistent_with_linear_integral"));
    assert_eq!(code(&["verify", "--config", &cfg]), 0);
}

#[test]
fn outputs_are_deterministic() {
    let run = |sub: &str, extra: &[&str]| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        let mut args = vec![sub, "--example"];
        args.extend_from_slice(extra);
        args.extend(["--seed", "5", "--out", &out]);
        assert!(geoflow(&args).status.code().is_some());
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap())
            .filter(|e| e.file_name() != "run_config.json")
            .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
            .collect();
        files.sort();
        files
    };
    for (sub, extra) in [
        ("verify", vec!["ex7-explicit"]),
        ("criterion", vec!["ex9-explicit"]),
        ("solve", vec!["ex1-implicit"]),
        ("geodesic", vec!["ex2-explicit", "--state", "1,1,0.7,-0.3"]),
    ] {
        let a = run(sub, &extra);
        assert!(!a.is_empty());
        assert_eq!(a, run(sub, &extra), "{sub}");
    }
}

#[test]
fn run_config_records_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let args = ["verify", "--example", "ex1-implicit", "--set", "k=1.0", "--out", &out];
    assert_eq!(code(&args), 0);
    let cfg = read_json(&dir.path().join("run_config.json"));
    assert_eq!(cfg["command"], json!("verify"));
    assert_eq!(cfg["constants"]["k"], json!(1.0));
}
