//! End-to-end runs of the `bvlab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bvlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn synthesis_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvlab(&["fuller-synthesize", "--x0", "-1,0.5"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("fuller-synthesize.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("param,cost_gap,sup_dev,l1_dev,tv,wall_ms")
    );
    assert!(lines.count() >= 10);
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("fuller-synthesize.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["experiment"], "fuller-synthesize");
    assert_eq!(manifest["config"]["x0"], serde_json::json!([-1.0, 0.5]));
    assert!((manifest["results"]["zeta"].as_f64().unwrap() - 0.4446236).abs() < 1e-7);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["truncation-rate", "--eta", "1,0.5,0.2,0.1,0.05,0.02,0.01"];
    let names = ["truncation-rate.csv", "truncation-rate.manifest.json"];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let out = bvlab(&args, dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        snapshots.push(names.map(|n| fs::read(dir.path().join(n)).unwrap()));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn empty_eps_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvlab(&["tv-path", "--eps", ""], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("tv-path.csv").exists());
}

#[test]
fn exit_codes_follow_failing_layer() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bvlab(args, dir.path()).status.code();
    assert_eq!(code(&["fuller-synthesize", "--x0", "0,0"]), Some(3));
    assert_eq!(code(&["fuller-synthesize", "--tol", "1e-20"]), Some(3));
    assert_eq!(code(&["truncation-rate", "--eta", "0.5,0.4"]), Some(5));
    assert_eq!(code(&["zeno-rate", "--model", "pendulum"]), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"experiment": "zeno-rate", "model": "bouncing-ball", "n": [2, 3, 4, 5, 6]}"#,
    )
    .unwrap();
    let out = bvlab(
        &[
            "zeno-rate",
            "--config",
            path.to_str().unwrap(),
            "--n",
            "2..8",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("zeno-rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7);
    let manifest = fs::read_to_string(dir.path().join("zeno-rate.manifest.json")).unwrap();
    assert!(manifest.contains("\"bouncing-ball\""));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"experiment": "tv-path", "epsilon": [0.1]}"#).unwrap();
    let out = bvlab(&["tv-path", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
