//! End-to-end runs of the experiment runner on tiny studies.

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use rib_cli::{run, CliError, Command, ExperimentSpec, Manifest, Status};

/// A study small enough to finish in well under a second.
fn tiny(command: Command) -> ExperimentSpec {
    let mut spec = ExperimentSpec::from_json(
        r#"{
            "name": "tiny",
            "dataset": {"kind": "gaussian_mixture", "dim": 6, "separation": 2.0},
            "split": {"n_train": 60, "n_test": 80},
            "train": {"encoder_hidden": [8], "rep_dim": 4, "critic_hidden": [8], "epochs": 3, "batch_size": 16},
            "probe": {"hidden": [8], "max_pairs": 60, "epochs": 5},
            "sweep": {"betas": [0.0, 1.0]},
            "fcmi": {"k1": 2, "k2": 3, "n": 40},
            "gap": {"sizes": [20, 40], "draws": 2, "dynamics_every": 1},
            "dynamics": {"every": 1, "probe": {"hidden": [8], "max_pairs": 40, "epochs": 3}}
        }"#,
    )
    .unwrap();
    spec.command = Some(command);
    spec
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for command in [Command::Train, Command::SweepBeta, Command::GapStudy] {
        let mut spec = tiny(command);
        spec.repeats = 2;
        let a = run(&spec, &tmp.path().join(format!("{command}_a"))).unwrap();
        spec.jobs = 2;
        let b = run(&spec, &tmp.path().join(format!("{command}_b"))).unwrap();
        let (fa, fb) = (csv_files(&a.dir), csv_files(&b.dir));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{command}");
    }
}

#[test]
fn manifest_covers_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&tiny(Command::Train), tmp.path()).unwrap();
    assert!(out.success());
    let m = Manifest::read(tmp.path()).unwrap();
    assert_eq!(m, out.manifest);
    assert!(m.verify(tmp.path()).is_empty());
    let listed: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for entry in fs::read_dir(tmp.path()).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(name == "manifest.json" || listed.contains(&name.as_str()), "{name} not listed");
    }
    for f in &m.files {
        assert!(m.schemas.contains_key(&f.schema), "{} has unknown schema {}", f.path, f.schema);
    }
    fs::write(tmp.path().join("metrics_tiny_s0.csv"), "edited").unwrap();
    assert_eq!(m.verify(tmp.path()), vec!["metrics_tiny_s0.csv".to_string()]);
}

#[test]
fn invalid_spec_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let mut spec = tiny(Command::SweepBeta);
    spec.sweep.betas = vec![-1.0];
    spec.split.n_train = 0;
    match run(&spec, &dir) {
        Err(CliError::Invalid(d)) => {
            let paths: Vec<&str> = d.iter().map(|d| d.path.as_str()).collect();
            assert!(paths.iter().any(|p| p.starts_with("sweep.betas")), "{paths:?}");
            assert!(paths.iter().any(|p| p.starts_with("split.n_train")), "{paths:?}");
        }
        other => panic!("expected diagnostics, got {other:?}"),
    }
    assert!(!dir.exists());
}

#[test]
fn zero_beta_arm_reproduces_ce() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&tiny(Command::SweepBeta), tmp.path()).unwrap();
    assert!(out.success());
    let read = |name: &str| fs::read(tmp.path().join(name)).unwrap();
    assert_eq!(read("metrics_tiny_s0_ce.csv"), read("metrics_tiny_s0_b0.csv"));
    let run_json = |name: &str| -> serde_json::Value { serde_json::from_slice(&read(name)).unwrap() };
    let (ce, b0) = (run_json("run_tiny_s0_ce.json"), run_json("run_tiny_s0_b0.json"));
    for key in ["encoder_digest", "head_digest", "critic_digest"] {
        assert_eq!(ce["final_metrics"][key], b0["final_metrics"][key], "{key}");
    }
}

#[test]
fn fcmi_report_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    run(&tiny(Command::EstimateFcmi), tmp.path()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("fcmi.json")).unwrap()).unwrap();
    let e = &report["estimate"];
    let (mean, total, bound) = (e["mean_mi"].as_f64().unwrap(), e["total_cmi"].as_f64().unwrap(), e["bound"].as_f64().unwrap());
    assert!((0.0..=std::f64::consts::LN_2).contains(&mean));
    assert!((total - 40.0 * mean).abs() < 1e-9);
    assert!((bound - (2.0 * total / 40.0).sqrt()).abs() < 1e-12);
    assert_eq!(report["selectors"].as_array().unwrap().len(), 2);
    assert_eq!(report["selectors"][0][0].as_str().unwrap().len(), 40);
}

#[test]
fn dynamics_rows_follow_the_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = tiny(Command::Dynamics);
    spec.train.epochs = 4;
    spec.dynamics.every = 2;
    run(&spec, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("dynamics_tiny_s0.csv")).unwrap();
    let epochs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["2", "4"]);
    assert!(tmp.path().join("roc_tiny_s0.csv").exists());
}

#[test]
fn gap_study_reports_bound_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&tiny(Command::GapStudy), tmp.path()).unwrap();
    let names: Vec<&str> = out.manifest.checks.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"recognizability_within_fcmi_bound"));
    assert!(names.contains(&"spearman_recognizability_gap"));
    let gap: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("gap.json")).unwrap()).unwrap();
    assert_eq!(gap["bound_checks"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(tmp.path().join("gap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    for d in 0..2 {
        assert!(tmp.path().join(format!("dynamics_tiny_n20_d{d}.csv")).exists());
    }
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_rib");

    let ok = Process::new(bin)
        .args(["verify-theory", "--out"])
        .arg(tmp.path().join("theory"))
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("[pass] theorem1_gaussian"), "{stdout}");
    assert_eq!(Manifest::read(&tmp.path().join("theory")).unwrap().status, Status::Complete);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"split": {"n_train": 0}}"#).unwrap();
    let check = Process::new(bin).args(["train", "--check", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(check.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&check.stdout).contains("split.n_train"));

    let invalid = Process::new(bin).args(["train", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(invalid.status.code(), Some(2));

    fs::write(&bad, r#"{"nonsense": 1}"#).unwrap();
    let parse = Process::new(bin).args(["train", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(parse.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("nonsense"));
}
