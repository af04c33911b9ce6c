use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cuelab::config::ExperimentConfig;

fn cuelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuelab")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, "[protocol]\nseeds = [4, 11]\nparallel = false\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn shipped_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}

#[test]
fn run_then_report_reproduces_metric_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    let run = cuelab(&["experiment", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["trials.csv", "config.toml", "metrics.csv", "trial_metrics.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    // Two seeds, control plus six conditions each.
    assert_eq!(cuelab::runner::read_manifest(&out.join("trials.csv")).unwrap().len(), 14);
    let written = fs::read(out.join("metrics.csv")).unwrap();
    let trials = fs::read(out.join("trial_metrics.csv")).unwrap();
    fs::remove_file(out.join("metrics.csv")).unwrap();

    let report = cuelab(&["experiment", "report", "--logs", out.to_str().unwrap()]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    assert_eq!(fs::read(out.join("metrics.csv")).unwrap(), written);
    assert_eq!(fs::read(out.join("trial_metrics.csv")).unwrap(), trials);
    assert_eq!(run.stdout, report.stdout);

    // The copied config reproduces the run.
    let again = tmp.path().join("again");
    let rerun = cuelab(&[
        "experiment",
        "run",
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(rerun.status.success());
    assert_eq!(fs::read(again.join("metrics.csv")).unwrap(), written);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[protocol]\ntarget_offset = 0.5\n").unwrap();
    let out = cuelab(&["experiment", "run", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target_offset"));

    let out = cuelab(&["simulate", "--persona", "nobody"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_code_1() {
    let out = cuelab(&["estimate", "--input", "/nonexistent/trace.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cuelab(&["experiment", "report", "--logs", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimate_tracks_a_recorded_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("trace.csv");
    let mut text = String::from("t_s,gyro_y\n");
    for i in 0..(285 * 20) {
        let t = i as f64 / 285.0;
        text += &format!("{t},{}\n", 150.0 * (std::f64::consts::TAU * 1.0 * t).sin());
    }
    fs::write(&input, text).unwrap();
    let out = cuelab(&["estimate", "--input", input.to_str().unwrap(), "--every", "285"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("t_s,phase_rad,cadence_hz,prediction,strides"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20);
    let last = rows.last().unwrap();
    assert!((last[2] - 1.0).abs() < 0.02, "cadence {}", last[2]);
    assert!((last[4] - 19.0).abs() <= 2.0, "strides {}", last[4]);
}

#[test]
fn simulate_writes_sample_and_cue_logs() {
    let out = cuelab(&["simulate", "--strategy", "fixed", "--seed", "3", "--direction", "down"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("t_s,est_cadence_hz,cue_active,cue_hz,strategy,direction,seed\n"));
    assert!(stdout.lines().nth(1).unwrap().ends_with(",fixed,DOWN,3"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target MAE"));

    let cues = cuelab(&["simulate", "--strategy", "fixed", "--seed", "3", "--direction", "down", "--cues"]);
    let text = String::from_utf8(cues.stdout).unwrap();
    assert!(text.starts_with("issued_at_s,end_s,cue_hz,beat_count,cadence_at_issue_hz,phase_label\n"));
    assert!(text.lines().count() > 1);
}
