//! CLI acceptance: criterion 10 (byte-identical outputs across reruns) plus
//! the exit-code and output-format contracts of each subcommand.

use cmdp_lab_cli::{cmd_describe, cmd_train, cmd_verify_bounds, strip_comments};
use std::fs;
use std::path::PathBuf;
use tempfile::TempDir;

fn write_config(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

const SMALL_CAMPAIGN: &str = r#"{
  "campaign": {"n_cmdps": 6, "pairs_per_cmdp": 2, "lambdas": [0.0, 0.5]},
  "seed": 11
}"#;

const SMALL_TRAIN: &str = r#"{
  "env": {"kind": "two_state", "gamma": 0.9, "b": 0.5},
  "cup": {"iterations": 4, "horizon": 24, "episodes": 4},
  "seed": 5
}"#;

#[test]
fn criterion_10_byte_identical_outputs() {
    let dir = TempDir::new().unwrap();
    let campaign_config = write_config(&dir, "campaign.json", SMALL_CAMPAIGN);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    assert_eq!(cmd_verify_bounds(&campaign_config, Some(&out_a)), 0);
    assert_eq!(cmd_verify_bounds(&campaign_config, Some(&out_b)), 0);
    let bytes_a = fs::read(&out_a).unwrap();
    let bytes_b = fs::read(&out_b).unwrap();
    let verify_identical = bytes_a == bytes_b;
    let verify_identical_stripped = strip_comments(&String::from_utf8(bytes_a.clone()).unwrap())
        == strip_comments(&String::from_utf8(bytes_b.clone()).unwrap());

    let train_config = write_config(&dir, "train.json", SMALL_TRAIN);
    let out_c = dir.path().join("c.csv");
    let out_d = dir.path().join("d.csv");
    assert_eq!(cmd_train(&train_config, Some(&out_c), None), 0);
    assert_eq!(cmd_train(&train_config, Some(&out_d), None), 0);
    let bytes_c = fs::read(&out_c).unwrap();
    let bytes_d = fs::read(&out_d).unwrap();
    let train_identical = bytes_c == bytes_d;

    let pass = verify_identical && verify_identical_stripped && train_identical;
    println!(
        "[{}] criterion 10: verify-bounds identical {verify_identical}, train identical {train_identical}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn verify_bounds_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let empty_lambdas = write_config(
        &dir,
        "empty.json",
        r#"{"campaign": {"lambdas": []}}"#,
    );
    assert_eq!(cmd_verify_bounds(&empty_lambdas, None), 2);
    let unknown_key = write_config(&dir, "unknown.json", r#"{"campain": {}}"#);
    assert_eq!(cmd_verify_bounds(&unknown_key, None), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(cmd_verify_bounds(&missing, None), 2);
}

#[test]
fn verify_bounds_default_campaign_summary_exits_zero_on_small_sweep() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", SMALL_CAMPAIGN);
    let out = dir.path().join("out.csv");
    assert_eq!(cmd_verify_bounds(&config, Some(&out)), 0);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert!(lines.next().unwrap().starts_with("cmdp,pair,seed"));
    // 6 cmdps x 2 pairs x 2 lambdas data rows.
    assert_eq!(text.lines().count(), 2 + 24);
}

#[test]
fn train_requires_an_environment() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "noenv.json", r#"{"cup": {"iterations": 1}}"#);
    assert_eq!(cmd_train(&config, None, None), 2);
}

#[test]
fn train_with_zero_iterations_writes_a_header_only_log() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "zero.json",
        r#"{"env": {"kind": "two_state", "gamma": 0.9, "b": 0.5},
            "cup": {"iterations": 0}}"#,
    );
    let out = dir.path().join("log.csv");
    assert_eq!(cmd_train(&config, Some(&out), None), 0);
    let text = fs::read_to_string(&out).unwrap();
    let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data_lines.len(), 1);
    assert!(data_lines[0].starts_with("iteration,j_hat,jc_hat"));
}

#[test]
fn train_baseline_writes_a_second_log() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "baseline.json",
        r#"{"env": {"kind": "two_state", "gamma": 0.9, "b": 0.5},
            "cup": {"iterations": 2, "horizon": 16, "episodes": 2},
            "baseline": true}"#,
    );
    let out = dir.path().join("log.csv");
    assert_eq!(cmd_train(&config, Some(&out), None), 0);
    assert!(out.exists());
    assert!(dir.path().join("log.baseline.csv").exists());
}

#[test]
fn train_dump_batch_emits_parsable_json_lines() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "dump.json", SMALL_TRAIN);
    let out = dir.path().join("log.csv");
    let dump = dir.path().join("batch.jsonl");
    assert_eq!(cmd_train(&config, Some(&out), Some(&dump)), 0);
    let text = fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["states"].is_array());
        assert!(value["cost_return"].is_number());
    }
}

#[test]
fn describe_reports_the_exact_uniform_objectives() {
    // Uniform policy on the two-state model: both actions pay expected
    // reward 1/2 per step (arriving at s1 half the time) and cost 1/2, so
    // J = J^c = 0.5/(1-0.9) = 5 exactly.
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "describe.json",
        r#"{"env": {"kind": "two_state", "gamma": 0.9, "b": 0.5}}"#,
    );
    assert_eq!(cmd_describe(&config, None), 0);
    let dump = dir.path().join("dp.json");
    assert_eq!(cmd_describe(&config, Some(&dump)), 0);
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&dump).unwrap()).unwrap();
    assert_eq!(value["signal"], "Reward");
    let v: Vec<f64> = serde_json::from_value(value["v"]["data"].clone())
        .unwrap_or_else(|_| serde_json::from_value(value["v"].clone()).unwrap());
    assert_eq!(v.len(), 2);
    assert!((v[0] - 5.0).abs() < 1e-9);
}

#[test]
fn describe_requires_an_environment_and_rejects_unknown_env_kinds() {
    let dir = TempDir::new().unwrap();
    let noenv = write_config(&dir, "noenv.json", r#"{}"#);
    assert_eq!(cmd_describe(&noenv, None), 2);
    let bad = write_config(
        &dir,
        "bad.json",
        r#"{"env": {"kind": "mujoco", "gamma": 0.9}}"#,
    );
    assert_eq!(cmd_describe(&bad, None), 2);
}
