//! End-to-end pipeline runs of the `urbanpulse` binary on the shipped
//! sample scenario.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urbanpulse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let output = run_in(dir, args);
    assert!(
        output.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("summary is JSON")
}

/// Writes the shared run config; paths are relative so two runs from
/// different working directories produce byte-identical configs.
fn write_config(dir: &Path) -> PathBuf {
    let scenario = repo_root().join("scenarios/sample_small.json");
    let config = serde_json::json!({
        "method": "signature",
        "fold": { "count": 3, "test_index": 2 },
        "sensitivity": "4h",
        "seed": 0,
        "params": {
            "signature": { "min_training_weeks": 2 }
        },
        "inputs": {
            "scenario": scenario,
            "data": "out/activity.csv"
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn run_full_pipeline(dir: &Path) {
    let stages = ["synth", "train", "calibrate", "detect", "evaluate", "pr-curve", "export-map"];
    for stage in stages {
        run_ok(dir, &[stage, "--config", "config.json", "--out-dir", "out"]);
    }
}

#[test]
fn full_pipeline_partition_identity_and_detection() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run_full_pipeline(dir.path());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    let r = &report["report"];
    let sum = r["true_positives"].as_u64().unwrap()
        + r["false_positives"].as_u64().unwrap()
        + r["false_negatives"].as_u64().unwrap()
        + r["true_negatives"].as_u64().unwrap();
    // 10 antennas × one 7-day test fold.
    assert_eq!(sum, 10 * 7 * 1440, "confusion counts must partition the grid");
    assert_eq!(r["total_antenna_minutes"].as_u64().unwrap(), sum);

    // The three injected events sit in the test fold; the signature method
    // must catch them at the weakest sensitivity.
    assert_eq!(report["ground_truth_events"], 3);
    assert!(
        r["recall_event"].as_f64().unwrap() >= 2.0 / 3.0,
        "event recall too low: {}",
        r["recall_event"]
    );

    // PR curve has all six points, most-frequent first.
    let curve = std::fs::read_to_string(dir.path().join("out/pr_curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7, "header + 6 sensitivities:\n{curve}");
    assert!(rows[1].starts_with("4h,"));
    assert!(rows[6].starts_with("1w,"));

    // GeoJSON features carry the fingerprint of the run.
    let map: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/alarms.geojson")).unwrap(),
    )
    .unwrap();
    assert_eq!(map["type"], "FeatureCollection");
    assert!(map["fingerprint"].is_string());
}

#[test]
fn identical_config_and_seed_give_byte_identical_artifacts() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = write_config(dir_a.path());
    let config_b = write_config(dir_b.path());
    assert_eq!(
        std::fs::read(&config_a).unwrap(),
        std::fs::read(&config_b).unwrap(),
        "config files must be byte-identical for the determinism contract"
    );
    run_full_pipeline(dir_a.path());
    run_full_pipeline(dir_b.path());

    let artifacts = [
        "out/activity.csv",
        "out/cells.csv",
        "out/dbue.json",
        "out/train_scores.csv",
        "out/thresholds.json",
        "out/alarms.csv",
        "out/report.json",
        "out/pr_curve.csv",
        "out/alarms.geojson",
    ];
    for artifact in artifacts {
        let a = std::fs::read(dir_a.path().join(artifact)).unwrap();
        let b = std::fs::read(dir_b.path().join(artifact)).unwrap();
        assert_eq!(a, b, "artifact {artifact} differs between identical runs");
    }
    // Model documents too.
    let models_rel = "out/models/signature";
    let mut names: Vec<String> = std::fs::read_dir(dir_a.path().join(models_rel))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(dir_a.path().join(models_rel).join(&name)).unwrap();
        let b = std::fs::read(dir_b.path().join(models_rel).join(&name)).unwrap();
        assert_eq!(a, b, "model {name} differs between identical runs");
    }
}

#[test]
fn detect_without_trained_models_fails_with_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run_ok(dir.path(), &["synth", "--config", "config.json", "--out-dir", "out"]);
    run_ok(dir.path(), &["train", "--config", "config.json", "--out-dir", "out"]);
    run_ok(dir.path(), &["calibrate", "--config", "config.json", "--out-dir", "out"]);
    // Remove the models to simulate a detect-before-train mistake.
    std::fs::remove_dir_all(dir.path().join("out/models")).unwrap();
    let output = run_in(dir.path(), &["detect", "--config", "config.json", "--out-dir", "out"]);
    assert!(!output.status.success());
    let error: serde_json::Value =
        serde_json::from_slice(&output.stderr).expect("stderr is an error JSON");
    assert_eq!(error["error"]["kind"], "model_not_found");
    assert!(error["error"]["message"].as_str().unwrap().contains("cell"));
}

#[test]
fn mismatched_fingerprint_is_refused_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run_full_pipeline(dir.path());
    // Re-evaluate under a different seed: same artifacts, different config.
    let output = run_in(
        dir.path(),
        &["evaluate", "--config", "config.json", "--out-dir", "out", "--seed", "7"],
    );
    assert!(!output.status.success());
    let error: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(error["error"]["kind"], "fingerprint_mismatch");
    run_ok(
        dir.path(),
        &["evaluate", "--config", "config.json", "--out-dir", "out", "--seed", "7", "--force"],
    );
}
