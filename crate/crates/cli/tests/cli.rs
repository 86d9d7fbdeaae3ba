//! End-to-end tests of the command-line interface: exit codes, JSON shape,
//! determinism, and the CSV side channel.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hetcycle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetcycle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

/// A minimal valid one-node cycle (two incoming dimensions).
const CYCLE: &str = r#"{
    "nodes": [{
        "id": "xi1*",
        "expanding": 1.4,
        "contracting": [-1.6],
        "transverse": [-0.4],
        "radial_abscissa": -0.6,
        "out_permutation": [1, 0]
    }]
}"#;

/// The same node with a broken permutation.
const BAD_CYCLE: &str = r#"{
    "nodes": [{
        "id": "xi1*",
        "expanding": 1.4,
        "contracting": [-1.6],
        "transverse": [-0.4],
        "radial_abscissa": -0.6,
        "out_permutation": [0, 0]
    }]
}"#;

fn write_temp(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_reports_stable_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = write_temp(dir.path(), "cycle.json", CYCLE);
    let output = hetcycle(&["analyze", &cycle]);
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    assert_eq!(report["report"]["verdict"], "AsymptoticallyStable");
    assert_eq!(report["tool"], "hetcycle");
    assert!(report["version"].is_string());
    let entries = report["transition_matrix"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
}

#[test]
fn analyze_rejects_invalid_cycle_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = write_temp(dir.path(), "bad.json", BAD_CYCLE);
    let output = hetcycle(&["analyze", &cycle]);
    assert_eq!(output.status.code(), Some(2));
    let report = stdout_json(&output);
    assert_eq!(report["error"], "invalid cycle description");
    let violations = report["details"]["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    assert!(violations[0]["rule"].as_str().unwrap().contains("bijection"));
}

#[test]
fn missing_file_is_exit_2() {
    let output = hetcycle(&["analyze", "/nonexistent/cycle.json"]);
    assert_eq!(output.status.code(), Some(2));
    let report = stdout_json(&output);
    assert!(report["error"].as_str().unwrap().contains("cannot read"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let first = hetcycle(&["example", "1"]);
    let second = hetcycle(&["example", "1"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn example_verdicts() {
    let one = stdout_json(&hetcycle(&["example", "1"]));
    assert_eq!(one["report"]["verdict"], "AsymptoticallyStable");
    let lambda = one["report"]["lambda_max"]["re"].as_f64().unwrap();
    assert!((lambda - 1.2214).abs() < 1e-3);

    let two = stdout_json(&hetcycle(&["example", "2"]));
    assert_eq!(two["report"]["verdict"], "FragmentarilyAsymptoticallyStable");
    assert_eq!(two["conditions"]["exit"]["satisfied"], true);
    let conflicts = two["conditions"]["conflicts"].as_array().unwrap();
    assert!(!conflicts.is_empty());
}

#[test]
fn unknown_example_is_exit_2() {
    let output = hetcycle(&["example", "3"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn example_2_simulation_visits_cycle_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let output = hetcycle(&[
        "example",
        "2",
        "--simulate",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    let labels: Vec<&str> = report["simulation"]["visit_labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let expected = ["xi1", "xi2*", "xi3", "xi4", "xi5"];
    assert!(labels.len() >= 10, "visits: {labels:?}");
    for (k, label) in labels.iter().enumerate() {
        assert_eq!(*label, expected[k % 5], "visit {k} of {labels:?}");
    }
    assert!(report["simulation"]["ordered_loops"].as_u64().unwrap() >= 2);

    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3,x4,x5"));
    assert!(lines.next().unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn glv_check_runs_the_connection_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let system = stdout_json(&hetcycle(&["example", "2"]))["system"].clone();
    let path = write_temp(dir.path(), "sys.json", &system.to_string());
    let output = hetcycle(&["glv-check", &path, "--triple", "1,2,3"]);
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    assert_eq!(report["triple"], serde_json::json!([1, 2, 3]));
    assert_eq!(report["tlv3"]["satisfied"], true);
    assert_eq!(report["tlv30"]["satisfied"], false);
    assert!(report["tlv30"]["checks"].as_array().unwrap().len() == 11);
}

#[test]
fn glv_check_rejects_bad_triple() {
    let dir = tempfile::tempdir().unwrap();
    let system = stdout_json(&hetcycle(&["example", "2"]))["system"].clone();
    let path = write_temp(dir.path(), "sys.json", &system.to_string());
    for bad in ["1,2", "0,1,2", "1,2,x"] {
        let output = hetcycle(&["glv-check", &path, "--triple", bad]);
        assert_eq!(output.status.code(), Some(2), "triple {bad}");
    }
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let system = stdout_json(&hetcycle(&["example", "1"]))["system"].clone();
    let path = write_temp(dir.path(), "sys.json", &system.to_string());
    let csv = dir.path().join("out.csv");
    let output = hetcycle(&[
        "simulate",
        &path,
        "--x0",
        "0.4,1.2,1e-5,1e-8,1e-8",
        "--t-end",
        "20",
        "--log",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    assert_eq!(report["trajectory"]["final_time"].as_f64(), Some(20.0));
    let final_state = report["trajectory"]["final_state"].as_array().unwrap();
    assert_eq!(final_state.len(), 5);
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("t,x1,x2,x3,x4,x5\n"));
}

#[test]
fn simulate_rejects_negative_start() {
    let dir = tempfile::tempdir().unwrap();
    let system = stdout_json(&hetcycle(&["example", "1"]))["system"].clone();
    let path = write_temp(dir.path(), "sys.json", &system.to_string());
    let output = hetcycle(&["simulate", &path, "--x0", "-1,1,1,1,1", "--t-end", "1"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn rank_cert_reports_unimodular_product() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = write_temp(dir.path(), "cycle.json", CYCLE);
    let output = hetcycle(&["rank-cert", &cycle, "--trials", "25", "--seed", "3"]);
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    let det = report["certificate"]["determinant"].as_i64().unwrap();
    assert!(det == 1 || det == -1);
    assert_eq!(report["sampled"]["full_rank"], true);
    assert!(report["sampled"]["min_abs_det"].as_f64().unwrap() > 1e-12);
}
