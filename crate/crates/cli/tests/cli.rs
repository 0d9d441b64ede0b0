use std::path::Path;
use std::process::Command;

use dlmpc::model::{write_model, SubsystemPartition, SystemModel};
use nalgebra::DMatrix;

fn dlmpc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlmpc"))
}

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}.cfg", env!("CARGO_MANIFEST_DIR"))
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmpc()
        .args(["simulate", "--config", &fixture("c1"), "--subsystems", "4", "--steps", "2", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trajectory.csv", "oracle_trajectory.csv", "stats.csv", "iterations.csv", "inner.csv", "messages.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    assert!(header(&dir.path().join("trajectory.csv")).starts_with("t,subsystem,signal"));
    let rows = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap().lines().count();
    assert!(rows > 1);
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmpc()
        .args(["simulate", "--config", &fixture("c1"), "--subsystems", "3", "--steps", "1"])
        .env(dlmpc::experiment::OUTPUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn benchmark_single_point_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmpc()
        .args(["benchmark", "--config", &fixture("c1"), "--steps", "2", "--set", "sweep_subsystems=5", "--set", "cases=c1", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("runtime.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("case,subsystems,locality"));
    assert!(lines[1].starts_with("c1,5,1"));
}

#[test]
fn benchmark_locality_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmpc()
        .args(["benchmark", "--sweep", "locality", "--config", &fixture("c1"), "--subsystems", "6", "--steps", "2"])
        .args(["--set", "sweep_locality=1,2", "--set", "cases=c1", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("runtime.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verify_passes_on_benchmark_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlmpc().args(["verify", "--config", &fixture("c1"), "--subsystems", "4", "--steps", "2", "--output-dir"]).arg(dir.path()).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS audit"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn verify_fails_on_injected_fault() {
    let out = dlmpc()
        .args(["verify", "--config", &fixture("c1"), "--subsystems", "4", "--steps", "1", "--set", "inject_fault=true"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("FAIL audit"));
}

/// Chain of three scalar subsystems where only the last one is actuated.
fn underactuated(dir: &Path) -> std::path::PathBuf {
    let part = SubsystemPartition::uniform(3, 1, 1).unwrap();
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.0, 0.3, 0.5, 0.3, 0.0, 0.3, 0.5]);
    let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let model = SystemModel::<f64>::from_dense(part, &a, &b, 0.1).unwrap();
    let path = dir.join("model.json");
    write_model(&path, &model).unwrap();
    path
}

#[test]
fn localizability_reports_infeasible_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = underactuated(dir.path());
    let out = dlmpc().args(["localizability", "--locality", "1", "--horizon", "4", "--model"]).arg(&model).arg("--output-dir").arg(dir.path()).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("not localizable"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("localizability.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("column,residual"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn verify_fails_below_localizability_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let model = underactuated(dir.path());
    let out = dlmpc().args(["verify", "--locality", "1", "--horizon", "4", "--model"]).arg(&model).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("FAIL localizability"));
}

#[test]
fn rejects_inconsistent_config() {
    let out = dlmpc().args(["simulate", "--config", &fixture("c1"), "--scenario", "s2"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pendulum"));
}

#[test]
fn rejects_unknown_key() {
    let out = dlmpc().args(["verify", "--set", "nonsense=1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
