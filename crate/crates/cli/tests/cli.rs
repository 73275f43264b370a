use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn lazylab(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lazylab"));
    cmd.args(args).env_remove("LAZYLAB_OUT").env_remove("LAZYLAB_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn small_config(dir: &Path, patch: Value) -> std::path::PathBuf {
    let out = lazylab(&["preset", "fit_random_labels"], &[]);
    assert!(out.status.success());
    let mut cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    let base = json!({
        "n": 8, "d": 4, "widths": [100], "betas": [1.0],
        "stop": { "max_steps": 20000, "log_every": 50, "stop_risk": 1e-3, "stop_time": null }
    });
    for p in [base, patch] {
        for (k, v) in p.as_object().unwrap() {
            cfg[k] = v.clone();
        }
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn successful_run_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    let out_dir = tmp.path().join("out");
    let out = lazylab(&["fit-random-labels", "--config", cfg.to_str().unwrap(), "--seed", "3", "--reproducible"], &[("LAZYLAB_OUT", &out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seeds"], json!([3]));
    assert_eq!(summary["reproducible"], json!(true));
    let plot = lazylab(&["plot", out_dir.to_str().unwrap()], &[]);
    assert!(plot.status.success());
    assert!(out_dir.join("plots/fit_random_labels_train_risk.csv").is_file());
}

#[test]
fn out_flag_overrides_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    let (env_dir, flag_dir) = (tmp.path().join("env"), tmp.path().join("flag"));
    let out = lazylab(
        &["fit-random-labels", "--config", cfg.to_str().unwrap(), "--out", flag_dir.to_str().unwrap(), "--workers", "2"],
        &[("LAZYLAB_OUT", &env_dir)],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.join("MANIFEST").is_file());
    assert!(!env_dir.exists());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = lazylab(&["one-neuron", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = small_config(tmp.path(), json!({}));
    let out = lazylab(&["one-neuron", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2), "experiment mismatch");

    let cfg = small_config(tmp.path(), json!({ "widths": [] }));
    let out = lazylab(&["fit-random-labels", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2), "empty width list");

    assert_eq!(lazylab(&["preset", "nope"], &[]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), json!({ "eta": { "rule": "fixed", "value": 1e4 } }));
    let out_dir = tmp.path().join("out");
    let out = lazylab(&["fit-random-labels", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"][0]["status"], json!("diverged"));
}

#[test]
fn budget_exhaustion_exits_with_4_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), json!({ "stop": { "max_steps": 3, "log_every": 1, "stop_risk": 1e-12, "stop_time": null } }));
    let out_dir = tmp.path().join("out");
    let out = lazylab(&["fit-random-labels", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(out_dir.join("MANIFEST").is_file());
}

#[test]
fn plot_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lazylab(&["plot", tmp.path().to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 runs"));
}

#[test]
fn presets_parse_back() {
    for name in ["fit_random_labels", "one_neuron", "width_sweep", "coupling_sweep", "bound_audit"] {
        let out = lazylab(&["preset", name], &[]);
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["experiment"], json!(name));
    }
}
