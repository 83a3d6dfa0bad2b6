use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaimd_cli::{OutputEnvelope, ScenarioFile};
use serde_json::Value;
use tempfile::TempDir;

fn gaimd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaimd")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SINGLE: &str = r#"{"alpha":0.5,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5}]}"#;
const PAIR: &str = r#"{"alpha":0.5,"capacity":3,"users":[{"a":1,"gamma":0,"b":0.5},{"a":1,"gamma":0,"b":0.5}]}"#;

fn json(out: &Output) -> OutputEnvelope {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_reports_multiplier_and_threshold() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "homog.json", SINGLE);
    let env = json(&gaimd(&["analyze", "--config", s(&cfg)]));
    assert_eq!(env.command, "analyze");
    let lambda = env.results["lambda_star"].as_f64().unwrap();
    let k = 2.0 * (1.0 - 0.5f64.powf(1.5)) / 1.125;
    assert!((lambda - k / (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
    let x = env.results["thresholds"][0].as_f64().unwrap();
    assert!((x - 4.0 / 3.0).abs() < 1e-12);
    let echoed: ScenarioFile = serde_json::from_value(env.inputs).unwrap();
    assert_eq!(echoed.capacity, 1.0);
}

#[test]
fn stability_lists_the_two_user_eigenvalue() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "n2.json", PAIR);
    let env = json(&gaimd(&["stability", "--config", s(&cfg)]));
    let report = &env.results["report"];
    assert_eq!(report["stable"], Value::Bool(true));
    let eig = &report["eigenvalues"][0];
    assert!((eig["re"].as_f64().unwrap() + 0.75).abs() < 1e-12);
    assert!((report["spectral_radius"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn fixed_point_closed_form_and_iteration_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "n2.json",
        r#"{"alpha":0.5,"capacity":3,"users":[{"a":1,"gamma":0,"b":0.5},{"a":1,"gamma":0,"b":0.5}],
            "initial_rates":[0.1,2.0]}"#,
    );
    let env = json(&gaimd(&["fixed-point", "--iterate", "--config", s(&cfg)]));
    let rates = &env.results["closed_form"]["profile"]["rates"];
    assert!((rates[0].as_f64().unwrap() - 12.0 / 7.0).abs() < 1e-15);
    assert!(env.results["iterated"]["distance_to_closed_form"].as_f64().unwrap() < 1e-10);
}

#[test]
fn infeasible_start_is_repaired_and_logged() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "hot.json",
        r#"{"alpha":0.5,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5},{"a":2,"gamma":0.5,"b":0.3}],
            "initial_rates":[2,3],"run":{"max_events":50}}"#,
    );
    let events = dir.path().join("events.csv");
    let env = json(&gaimd(&["simulate", "--policy", "index", "--events", s(&events), "--config", s(&cfg)]));
    assert_eq!(env.results["events"], 50);
    let repairs = env.results["repair_events"].as_u64().unwrap();
    assert!(repairs > 0);
    let log = fs::read_to_string(&events).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("event,time,user,rate_before,rate_after,sum_after"));
    let zero_time = lines.clone().filter(|l| l.split(',').nth(1) == Some("0.0")).count();
    assert_eq!(zero_time as u64, repairs);
    assert_eq!(lines.count() as u64, 50 + repairs);
}

#[test]
fn threshold_simulation_matches_relaxed_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "t.json",
        r#"{"alpha":0.5,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5}],"initial_rates":[0.6666666666666666]}"#,
    );
    let env = json(&gaimd(&["simulate", "--policy", "threshold", "--max-events", "4", "--config", s(&cfg)]));
    assert!((env.results["average_load"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(env.results["thresholds"].is_array());
}

#[test]
fn sweep_and_frontier_emit_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "homog.json", SINGLE);
    let out = gaimd(&["sweep", "--n-list", "2,4", "--jobs", "2", "--config", s(&cfg)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,j_index,j_relaxed,gap,x1_fixed,x_bar"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 2.0);
    assert!((first[4] - 8.0 / 7.0).abs() < 1e-15);

    let path = dir.path().join("frontier.csv");
    let out = gaimd(&["frontier", "--lambda-grid", "0.5,1,2", "--output", s(&path), "--config", s(&cfg)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("lambda,x_bar,neg_j,g\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "n2.json", PAIR);
    for args in [&["simulate", "--max-events", "200"][..], &["sweep", "--jobs", "4"][..], &["analyze"][..]] {
        let mut full = args.to_vec();
        full.extend(["--config", s(&cfg)]);
        let a = gaimd(&full);
        let b = gaimd(&full);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn floats_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "homog.json", SINGLE);
    let out = gaimd(&["frontier", "--format", "json", "--lambda-grid", "0.3,0.7", "--config", s(&cfg)]);
    let env = json(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let reparsed: OutputEnvelope = serde_json::from_str(&text).unwrap();
    assert_eq!(reparsed, env);
    let x = env.results[0]["x_bar"].as_f64().unwrap();
    assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "good.json", SINGLE);

    assert_eq!(gaimd(&["--help"]).status.code(), Some(0));
    assert_eq!(gaimd(&["--version"]).status.code(), Some(0));
    assert_eq!(gaimd(&["bogus"]).status.code(), Some(1));
    assert_eq!(gaimd(&["analyze"]).status.code(), Some(1));
    assert_eq!(gaimd(&["analyze", "--config", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(gaimd(&["analyze", "--format", "csv", "--config", s(&good)]).status.code(), Some(1));

    let alpha_one = write(&dir, "a1.json", r#"{"alpha":1,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5}]}"#);
    let out = gaimd(&["analyze", "--config", s(&alpha_one)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let missing = write(&dir, "m.json", r#"{"alpha":0.5,"capacity":1}"#);
    let out = gaimd(&["analyze", "--config", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("users"));

    let typo = write(&dir, "t.json", r#"{"alpha":0.5,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5}],"capacty":2}"#);
    let out = gaimd(&["analyze", "--config", s(&typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacty"));

    let broken = write(&dir, "b.json", "{\"alpha\":0.5,\n\"capacity\":");
    let out = gaimd(&["analyze", "--config", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let mixed = write(
        &dir,
        "mixed.json",
        r#"{"alpha":0.5,"capacity":1,"users":[{"a":1,"gamma":0,"b":0.5},{"a":1,"gamma":0,"b":0.3}]}"#,
    );
    assert_eq!(gaimd(&["stability", "--config", s(&mixed)]).status.code(), Some(2));

    let slow = write(&dir, "slow.json", r#"{"alpha":0.5,"capacity":5,"users":[{"a":1,"gamma":0,"b":0.9},{"a":1,"gamma":0,"b":0.9},{"a":1,"gamma":0,"b":0.9},{"a":1,"gamma":0,"b":0.9},{"a":1,"gamma":0,"b":0.9}],"initial_rates":[1,0.1,0.1,0.1,0.1]}"#);
    let out = gaimd(&["fixed-point", "--iterate", "--max-iter", "3", "--config", s(&slow)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}
