//! Drives the `eocrc` binary end to end on a reduced desk config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn eocrc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eocrc"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let desk = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(desk).unwrap()).unwrap();
    v["output_dir"] = "out".into();
    v["cohort"]["synthetic"]["n_patients"] = 3000.into();
    v["cohort"]["synthetic"]["prevalence"] = 0.07.into();
    v["models"]["kinds"] = serde_json::json!(["LR", "XGBoostPreset"]);
    v["models"]["n_iters"] = 2.into();
    v["models"]["k_folds"] = 3.into();
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn stage_by_stage_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for verb in [&["generate"][..], &["featurize"], &["train"], &["calibrate"], &["evaluate"], &["llm", "export-finetune"], &["llm", "evaluate"], &["report"]] {
        let mut args = vec!["--config", cfg];
        args.extend_from_slice(verb);
        let out = eocrc(&args, dir.path());
        assert!(out.status.success(), "{verb:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    let table = std::fs::read_to_string(dir.path().join("out/table.txt")).unwrap();
    assert!(table.contains("XGBoostPreset") && table.contains("LLM (mock)"));
    let staged = std::fs::read(dir.path().join("out/metrics/metrics.json")).unwrap();

    let out = eocrc(&["--config", cfg, "--output-dir", "again", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(staged, std::fs::read(dir.path().join("again/metrics/metrics.json")).unwrap());

    let out = eocrc(&["--config", cfg, "explain", "--model", "xgboost"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("importance.csv"));
}

#[test]
fn missing_prerequisite_fails_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = eocrc(&["--config", cfg.to_str().unwrap(), "calibrate"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("featurize"), "{err}");
}

#[test]
fn invalid_config_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"seed": 1, "output_dir": "o", "cohort": {"synthetic": {"n_patients": 10, "prevalence": 0.1, "signal_strength": 1}}, "split": {"train_pos": 1, "train_neg": 1, "n_test_runs": 1, "test_pos_per_run": 1, "test_neg_per_run": 1}, "models": {"kinds": ["LR"], "n_iters": 1, "k_folds": -3}}"#).unwrap();
    let out = eocrc(&["--config", path.to_str().unwrap(), "generate"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("models.k_folds"), "{err}");
}
