//! Black-box tests against the built binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shuffledp"))
}

#[test]
fn calibrate_asp_emits_parameters() {
    let out = bin()
        .args(["calibrate", "--protocol", "asp", "--eps", "0.01", "--n", "100000"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b = v["b"].as_f64().unwrap();
    let p = v["p"].as_f64().unwrap();
    assert!((0.19..=0.24).contains(&b), "b = {b}");
    assert!((1.05..=1.21).contains(&p), "p = {p}");
}

#[test]
fn calibrate_flip_emits_dummy_parameters() {
    let out = bin()
        .args(["calibrate", "--protocol", "flip", "--eps", "1.0", "--n", "100000", "--c", "16"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["s"].as_u64().unwrap(), 1);
    assert!(v["q_flip"].as_f64().unwrap() < 0.5);
}

#[test]
fn mi_bound_reports_constraint_value() {
    let out = bin()
        .args(["mi-bound", "--eps", "0.05", "--n", "100000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["i_u"].as_f64().unwrap() > 0.0);
    assert!(v["prior_bound"].as_f64().unwrap() >= v["i_u"].as_f64().unwrap());
    assert!(v["asp_bound_lhs"].as_f64().unwrap() <= 1e-5 * (1.0 + 1e-3));
}

#[test]
fn run_small_experiment_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "protocol": "pure", "eps": 0.5,
            "dataset": {"kind": "normal", "n": 2000},
            "m": 32, "c": 16, "repetitions": 2, "seed": 5
        }"#,
    )
    .unwrap();
    let json_out = dir.path().join("report.json");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&json_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(report["repetitions"].as_array().unwrap().len(), 2);

    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim().lines().count(), 1 + 2 + 2, "{text}");
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"protocol": "pure", "eps": 0.5, "dataset": {"kind": "normal", "n": 2000},
            "m": 32, "c": 16, "repetitions": 1, "seed": 5}"#,
    )
    .unwrap();
    let a = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    let b = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "6"])
        .output()
        .unwrap();
    let va: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let vb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_ne!(va["aggregate"]["mean"]["w1"], vb["aggregate"]["mean"]["w1"]);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"protocol": "flip", "eps": 0.5, "c": 24, "dataset": {"kind": "normal", "n": 2000}}"#,
    )
    .unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn attack_inline_flags_emit_riar() {
    let out = bin()
        .args([
            "attack",
            "--protocol",
            "pure",
            "--eps",
            "0.5",
            "--n",
            "2000",
            "--beta",
            "0.1",
            "--targets",
            "1.0",
            "--c",
            "16",
            "--m",
            "32",
            "--repetitions",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let riar = v["riar_min"].as_f64().unwrap();
    assert!(riar >= 0.0 && riar.is_finite());
}

#[test]
fn sweep_writes_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{
            "axis": "eps", "values": [0.5, 1.0],
            "base": {"protocol": "pure", "eps": 0.5,
                     "dataset": {"kind": "normal", "n": 2000},
                     "m": 32, "c": 16, "repetitions": 1, "seed": 5}
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("sweep-eps-0.5.json").exists());
    assert!(out_dir.join("sweep-eps-1.json").exists());
}
