use std::path::Path;
use std::process::Command;

fn tnqaml(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tnqaml"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("run tnqaml");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

const PIPELINE: &str = r#"{
  "dataset": {"kind": "one_hot", "counts": [8, 18, 5]},
  "train": {"learning_rate": 0.01, "chi_max": 2, "block_size": 2, "max_sweeps": 300},
  "noise": {"xi2": [0.0, 0.02], "zeta": [0.0, 0.02]},
  "shots": 2000,
  "runs": 3
}"#;

#[test]
fn full_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PIPELINE);
    for verb in ["ingest", "train", "gauge", "compile", "simulate", "evaluate"] {
        let (code, err) = tnqaml(dir.path(), &["--config", &cfg, verb]);
        assert_eq!(code, 0, "{verb}: {err}");
    }
    let out = dir.path().join("out");
    for f in ["dataset.txt", "model.mps", "gauged.mps", "compile_report.json", "kl_vs_noise.csv", "kl_vs_noise.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(std::fs::read_dir(out.join("circuits")).unwrap().count(), 6);

    let csv = std::fs::read_to_string(out.join("kl_vs_noise.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(3).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // trained to the entropy floor, so the noiseless cell is close to zero
    assert!(rows[0][2] < 0.01, "{csv}");

    let first = std::fs::read(out.join("counts/xi2_0.02_zeta_0_run_01.csv")).unwrap();
    let (code, _) = tnqaml(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(out.join("counts/xi2_0.02_zeta_0_run_01.csv")).unwrap(), first);
}

#[test]
fn benchmark_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = tnqaml(dir.path(), &["benchmark"]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/benchmark.json")).unwrap()).unwrap();
    let compile = report["compile"].as_array().unwrap();
    assert_eq!(compile.len(), 3);
    assert!(compile.iter().all(|c| c["cost"].as_f64().unwrap() < 5e-4));
    assert!(dir.path().join("out/benchmark.csv").is_file());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = tnqaml(dir.path(), &["--config", "/nonexistent/cfg.json", "ingest"]);
    assert_eq!(code, 2);
    let cfg = write_config(dir.path(), r#"{"train": {"eta": 1.0}}"#);
    let (code, err) = tnqaml(dir.path(), &["--config", &cfg, "train"]);
    assert_eq!(code, 2);
    assert!(err.contains("eta"), "{err}");
    // missing input: nothing written
    let (code, _) = tnqaml(dir.path(), &["train"]);
    assert_eq!(code, 2);
    assert!(!dir.path().join("out/model.mps").exists());
}

#[test]
fn not_converged_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"dataset": {"kind": "one_hot", "counts": [3, 5, 2, 7]},
            "train": {"learning_rate": 0.01, "chi_max": 2, "block_size": 2, "max_sweeps": 200},
            "compile": {"max_entanglers": 0}}"#,
    );
    for verb in ["ingest", "train"] {
        assert_eq!(tnqaml(dir.path(), &["--config", &cfg, verb]).0, 0);
    }
    let (code, err) = tnqaml(dir.path(), &["--config", &cfg, "compile"]);
    assert_eq!(code, 4, "{err}");
    assert!(dir.path().join("out/compile_report.json").is_file());
}
