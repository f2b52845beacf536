use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mirrorbus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrorbus")).args(args).output().unwrap()
}

fn run_exp1(dir: &Path) {
    let out = mirrorbus(&["run", "--experiment", "exp1", "--seed", "3", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_logs_traces_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    run_exp1(dir.path());
    for stem in ["exp1-1-eca_only", "exp1-2-head_only", "exp1-3-both"] {
        assert!(dir.path().join(format!("{stem}.jsonl")).is_file());
        assert!(dir.path().join(format!("{stem}.trace.jsonl")).is_file());
    }
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("exp1-metrics.json")).unwrap()).unwrap();
    assert!(metrics.to_string().contains("head_only"));
}

#[test]
fn audit_accepts_a_clean_log_and_rejects_a_tampered_one() {
    let dir = tempfile::tempdir().unwrap();
    run_exp1(dir.path());
    let log = dir.path().join("exp1-2-head_only.jsonl");
    let out = mirrorbus(&["audit", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no violations"));

    // push one head state past the pan limit
    let text = std::fs::read_to_string(&log).unwrap();
    let mut tampered = false;
    let lines: Vec<String> = text
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            if !tampered && v["topic"] == "/head/state" && v["seq"] == 100 {
                v["msg"]["pan"] = 80.0.into();
                tampered = true;
            }
            v.to_string()
        })
        .collect();
    assert!(tampered);
    let bad = dir.path().join("tampered.jsonl");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = mirrorbus(&["audit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
}

#[test]
fn replay_reproduces_the_condition_log() {
    let dir = tempfile::tempdir().unwrap();
    run_exp1(dir.path());
    let trace = dir.path().join("exp1-3-both.trace.jsonl");
    let replayed = dir.path().join("replayed.jsonl");
    let out = mirrorbus(&[
        "replay",
        trace.to_str().unwrap(),
        "--experiment",
        "exp1",
        "--condition",
        "3",
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let original = std::fs::read(dir.path().join("exp1-3-both.jsonl")).unwrap();
    assert!(std::fs::read(&replayed).unwrap() == original);

    let out = mirrorbus(&["replay", trace.to_str().unwrap(), "--experiment", "exp1", "--condition", "3"]);
    assert!(out.stdout == original);
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[mimicry]\nalpha = 2.0\n").unwrap();
    let out = mirrorbus(&[
        "run",
        "--experiment",
        "exp1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let out = mirrorbus(&["audit", dir.path().join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn defaults_round_trip_as_a_config_file() {
    let out = mirrorbus(&["defaults"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("default.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let out = mirrorbus(&["run", "--experiment", "exp2", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn template_lists_68_points_in_metres() {
    let out = mirrorbus(&["template"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["units"], "m");
    assert_eq!(v["version"], 1);
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 68);
    assert!(points.iter().all(|p| p.as_array().unwrap().iter().all(|c| c.as_f64().unwrap().abs() < 0.2)));
}

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let out = mirrorbus(&["defaults"]);
    let shipped = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml")).unwrap();
    assert!(out.stdout == shipped, "config/default.toml is stale; regenerate with `mirrorbus defaults`");
}
