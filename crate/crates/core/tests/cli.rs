use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use iscc::SystemConfig;

fn iscc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iscc")).args(args).output().expect("binary runs")
}

fn small_config() -> SystemConfig {
    SystemConfig { M: 2, L: 3, N: 4, K: 4, ..Default::default() }
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("base.json");
    small_config().save(&path).unwrap();
    path.to_str().unwrap().to_owned()
}

fn write_spec(dir: &Path, schemes: &str) -> String {
    write_config(dir);
    let path = dir.join("spec.json");
    let spec = format!(r#"{{"base_config": "base.json", "axis": "power", "values": [0.5], "schemes": {schemes}, "trials": 1}}"#);
    fs::write(&path, spec).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn validate_accepts_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = iscc(&["validate", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_rejects_unknown_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = serde_json::to_value(small_config()).unwrap();
    value["bogus"] = serde_json::json!(1.0);
    let path = dir.path().join("bad.json");
    fs::write(&path, value.to_string()).unwrap();
    let out = iscc(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"["local", "thco_mrs"]"#);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = iscc(&["run", "--spec", &spec, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with(&iscc::harness::CSV_HEADER.join(",")));
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"["local"]"#);
    let out = dir.path().join("missing").join("out.csv");
    let res = iscc(&["run", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn trace_with_infinite_tolerance_stops_after_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("trace.csv");
    let res = iscc(&["trace", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap(), "--outer-tol", "inf"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,phase,objective_s,elapsed_ms"));
    let phases: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(phases.first(), Some(&"init"));
    assert_eq!(phases.iter().filter(|p| **p == "offloading").count(), 1);
}
