//! Integration tests for the orchestration layer and the CLI surface.

use cibsysid::config::RunConfig;
use cibsysid::dataset::Dataset;
use cibsysid::dsr::DsrConfig;
use cibsysid::pipeline::{self, Pipeline};
use cibsysid::simulator::{DisturbanceEvent, DisturbanceTarget, SimConfig};
use std::path::PathBuf;
use std::process::Command;

/// Small but fully-featured configuration: all three §-style step events on
/// a short horizon, tiny expression-search budget.
fn quick_config(out_dir: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out_dir;
    cfg.seed = 11;
    cfg.sim = SimConfig {
        t_end: 0.2,
        schedule: vec![
            DisturbanceEvent {
                time: 0.05,
                target: DisturbanceTarget::PRef,
                value: 0.7,
            },
            DisturbanceEvent {
                time: 0.1,
                target: DisturbanceTarget::QRef,
                value: 0.2,
            },
            DisturbanceEvent {
                time: 0.15,
                target: DisturbanceTarget::VRef,
                value: 0.9,
            },
        ],
        ..Default::default()
    };
    cfg.dsr = DsrConfig {
        batch_size: 30,
        epochs: 2,
        const_max_evals: 40,
        train_stride: 10,
        ..Default::default()
    };
    cfg
}

#[test]
fn default_schedule_matches_reported_events() {
    let cfg = RunConfig::default();
    let times: Vec<f64> = cfg.sim.schedule.iter().map(|e| e.time).collect();
    assert_eq!(times, vec![0.5, 1.0, 1.5]);
    assert_eq!(cfg.sim.schedule[0].target, DisturbanceTarget::PRef);
    assert_eq!(cfg.sim.schedule[0].value, 0.7);
    assert_eq!(cfg.sim.schedule[1].value, 0.2);
    assert_eq!(cfg.sim.schedule[2].value, 0.9);
}

#[test]
fn same_config_gives_identical_fingerprint() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = Pipeline::new(quick_config(dir_a.path().into()))
        .unwrap()
        .simulate()
        .unwrap();
    let b = Pipeline::new(quick_config(dir_b.path().into()))
        .unwrap()
        .simulate()
        .unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
}

#[test]
fn manifest_records_fingerprint_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Pipeline::new(quick_config(dir.path().into()))
        .unwrap()
        .simulate()
        .unwrap();
    let manifest: pipeline::Manifest = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join(pipeline::MANIFEST_FILE)).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest.dataset_fingerprint, ds.fingerprint());
    assert_eq!(manifest.config.seed, 11);
}

#[test]
fn late_event_is_rejected_before_any_compute() {
    let mut cfg = quick_config(std::env::temp_dir());
    cfg.sim.t_end = 0.1; // before the 0.15 s event
    assert!(Pipeline::new(cfg).is_err());
}

#[test]
fn dsr_with_zero_epochs_reports_untrained_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path().into());
    cfg.dsr.epochs = 0;
    let p = Pipeline::new(cfg).unwrap();
    p.simulate().unwrap();
    let report = p.identify_dsr().unwrap();
    assert_eq!(report.rows.len(), 9);
    // A random-batch best still yields finite scores on every target.
    for row in &report.rows {
        assert!(row.mse.is_finite() && row.r2.is_finite());
    }
}

#[test]
fn full_pipeline_report_covers_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick_config(dir.path().into())).unwrap();
    let comparison = p.all().unwrap();
    assert_eq!(comparison.rows.len(), 9);
    assert_eq!(comparison.methods.len(), 2);
    assert!(comparison.runtime_ratio.is_some());

    let report_csv = std::fs::read_to_string(dir.path().join(pipeline::REPORT_CSV_FILE)).unwrap();
    assert_eq!(report_csv.lines().count(), 10, "header + 9 target rows");
    assert!(report_csv.starts_with(
        "target,sindy_mse,sindy_r2,sindy_complexity,dsr_mse,dsr_r2,dsr_complexity"
    ));
    for name in Dataset::target_names() {
        assert!(dir.path().join(format!("plot_{name}.csv")).exists());
    }

    // Rerunning the report from the stored artifacts is idempotent.
    let before = std::fs::read(dir.path().join(pipeline::REPORT_CSV_FILE)).unwrap();
    p.report().unwrap();
    let after = std::fs::read(dir.path().join(pipeline::REPORT_CSV_FILE)).unwrap();
    assert_eq!(before, after);
}

#[test]
fn report_names_the_missing_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick_config(dir.path().into())).unwrap();
    p.simulate().unwrap();
    p.identify_sindy().unwrap();
    p.identify_dsr().unwrap();
    std::fs::remove_file(dir.path().join(pipeline::DSR_MODEL_FILE)).unwrap();
    let err = p.report().unwrap_err();
    assert!(
        err.to_string().contains("dsr_model.json"),
        "error was: {err}"
    );
}

#[test]
fn identify_without_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick_config(dir.path().into())).unwrap();
    let err = p.identify_sindy().unwrap_err();
    assert!(err.to_string().contains("dataset.csv"), "error was: {err}");
}

#[test]
fn cli_rejects_unknown_method() {
    let out = Command::new(env!("CARGO_BIN_EXE_cibsysid"))
        .args(["identify", "--method", "magic"])
        .output()
        .expect("spawn binary");
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown method"), "stderr: {stderr}");
}

#[test]
fn cli_simulate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cfg.toml");
    std::fs::write(
        &config_path,
        "seed = 3\n[sim]\nt_end = 0.02\nschedule = []\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cibsysid"))
        .args([
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "simulate",
        ])
        .output()
        .expect("spawn binary");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ds = Dataset::read(&dir.path().join(pipeline::DATASET_FILE)).unwrap();
    assert_eq!(ds.n_samples(), 201);
}

#[test]
fn cli_nonzero_exit_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    std::fs::write(&config_path, "definitely_not_a_key = true\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cibsysid"))
        .args(["--config", config_path.to_str().unwrap(), "simulate"])
        .output()
        .expect("spawn binary");
    assert!(!out.status.success());
}
