//! The `auction-lab` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "mechanism": {"kind": "threshold", "epsilon": 0.5, "rho": "1/3"},
    "agent": {"kind": "stay_good"},
    "distribution": {"kind": "uniform", "B": 1, "tick": 0.25},
    "T": 100,
    "reps": 5
}"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auction-lab")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    let report = dir.path().join("report.json");
    fs::write(&config, CONFIG).unwrap();
    let out = lab(&["simulate", "--config", path(&config), "--seed", "7", "--out", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["reps"], 5);
    assert_eq!(doc["params"]["T"], 100);
    assert_eq!(doc["mean_revenue"], 0.2475);
}

#[test]
fn flags_override_config_and_trace_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    let trace = dir.path().join("trace.csv");
    fs::write(&config, CONFIG).unwrap();
    let out = lab(&[
        "simulate",
        "--config",
        path(&config),
        "--seed",
        "1",
        "--T",
        "20",
        "--reps",
        "2",
        "--trace",
        path(&trace),
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["params"]["T"], 20);
    assert_eq!(doc["reps"], 2);
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), "round,state,avg_bid,value,bid,alloc,payment,utility");
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    fs::write(&config, CONFIG).unwrap();
    let out = lab(&["simulate", "--config", path(&config), "--reps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let seed: u64 = stderr.trim().strip_prefix("seed: ").expect("seed line").parse().unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], seed);
}

#[test]
fn bad_config_exits_one_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    fs::write(&config, CONFIG.replace("\"epsilon\": 0.5", "\"epsilon\": 1.2")).unwrap();
    let out = lab(&["simulate", "--config", path(&config), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mechanism.epsilon"));
}

#[test]
fn oracle_passes_on_desk_instance() {
    let out = lab(&["oracle", "--grid", "5", "--T", "8", "--epsilon", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["passed"], true);
    assert_eq!(doc["checks"].as_array().unwrap().len(), 4);
    assert_eq!(doc["geometric"]["cases"], 100);
}

#[test]
fn oracle_with_zero_lookahead_exits_two() {
    let out = lab(&["oracle", "--grid", "5", "--T", "8", "--epsilon", "0.5", "--k", "0,1,2"]);
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let witness = &doc["checks"][0]["witnesses"][0];
    assert_eq!(witness["k"], 0);
    assert_eq!(witness["bid"], "0");
}

#[test]
fn frontier_writes_csv() {
    let out = lab(&["frontier", "--epsilon", "0.2,0.5", "--T", "200", "--reps", "5", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,rho,alpha_hat,alpha_ci,beta_hat,beta_ci,alpha_theory,beta_theory,impossibility_beta");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0.5,0.3333333333333333,"));
}

#[test]
fn bounds_table_and_vacuous_flag() {
    let out = lab(&["bounds", "--k", "1,2", "--mu", "0.4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",true"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vacuous"));
}
