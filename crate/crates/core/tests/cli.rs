//! The `filaqc` binary: subcommands, overrides and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn filaqc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filaqc")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = filaqc(dir.path(), &["synth", "--out", "wall.ply", "--length-m", "0.3", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(dir.path().join("qc.ini"), "[input]\npath = wall.ply\n\n[render]\nradius_px = 0\n").unwrap();
    dir
}

#[test]
fn run_succeeds_and_reports_timing() {
    let dir = setup();
    let o = filaqc(dir.path(), &["run", "--config", "qc.ini"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fps"));
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/timing.json")).unwrap()).unwrap();
    for key in ["pre_processing_ms", "segmentation_ms", "post_processing_ms", "total_ms", "fps"] {
        assert!(timing[key].as_f64().unwrap() > 0.0, "{key}");
    }
}

#[test]
fn stages_run_one_by_one() {
    let dir = setup();
    for stage in ["render", "segment", "merge", "profile", "backproject"] {
        let o = filaqc(dir.path(), &[stage, "--config", "qc.ini", "--set", "output.dir=staged"]);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", stderr(&o));
    }
    assert!(dir.path().join("staged/labeled.ply").exists());
    assert!(!dir.path().join("staged/timing.json").exists());
}

#[test]
fn config_errors_exit_2_before_any_output() {
    let dir = setup();
    let o = filaqc(dir.path(), &["render", "--config", "qc.ini", "--set", "camera.mode=ksp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sensor_pos"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = filaqc(dir.path(), &["render", "--config", "qc.ini", "--set", "camera.colour=red"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("camera.colour"), "{}", stderr(&o));

    let o = filaqc(dir.path(), &["render", "--config", "missing.ini"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn input_errors_exit_3() {
    let dir = setup();
    let o = filaqc(dir.path(), &["render", "--config", "qc.ini", "--set", "input.path=gone.xyz"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("gone.xyz"), "{}", stderr(&o));

    std::fs::write(dir.path().join("bad.xyz"), "0 0 0\n1 oops 2\n").unwrap();
    let o = filaqc(dir.path(), &["render", "--config", "qc.ini", "--set", "input.path=bad.xyz"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.xyz"), "{}", stderr(&o));

    let o = filaqc(dir.path(), &["merge", "--config", "qc.ini"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    let o = filaqc(dir.path(), &["synth", "--out", "w.ply", "--spacing-mm", "8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("w.ply").exists());
}
