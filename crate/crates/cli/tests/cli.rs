use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssmon(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmon")).args(args).current_dir(dir).output().unwrap()
}

const SMALL: &str = r#"
[campaign]
runs = 3
seed = 7
sizing_window = 60.0

[simulation]
duration = 60.0
"#;

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = ssmon(&["simulate", "--config", "small.toml", "--ess", "on", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("run/trajectory.csv");
    assert!(csv.exists());

    let out = ssmon(&["estimate", csv.to_str().unwrap(), "--tau", "0.5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["samples"].as_u64(), Some(3600));
    assert!(v["all_modes"]["modes"].as_array().is_some_and(|m| !m.is_empty()));

    let out = ssmon(&["estimate", csv.to_str().unwrap(), "--out", "est"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("est/modes.json")).unwrap();
    let w: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(w["interarea"], v["interarea"]);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    for name in ["a", "b"] {
        let out = ssmon(&["simulate", "--config", "small.toml", "--ess", "off", "--seed", "11", "--out", name], dir.path());
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn campaign_writes_report_timing_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = ssmon(&["campaign", "--config", "small.toml", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["arms"].as_array().unwrap().len(), 2);
    assert_eq!(report["records"].as_array().unwrap().len(), 6);
    assert!(res.join("timing.json").exists());
    let tables = fs::read_to_string(res.join("tables.txt")).unwrap();
    assert_eq!(tables, String::from_utf8(out.stdout).unwrap());
}

#[test]
fn simulate_rejects_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssmon(&["simulate", "--ess", "both", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[campaign]\nrunz = 3\n").unwrap();
    let out = ssmon(&["campaign", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ssmon(&["campaign", "--config", "nope.toml"], dir.path()).status.code(), Some(3));
    assert_eq!(ssmon(&["estimate", "nope.csv"], dir.path()).status.code(), Some(3));
}
