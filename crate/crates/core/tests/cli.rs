//! End-to-end runs of the `pcha` binary.

use std::path::Path;
use std::process::{Command, Output};

use pcha::experiments::{gen_additive, Target};
use pcha::io::{fmt_f64, parse_table};

fn pcha(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcha"))
        .args(args)
        .current_dir(dir)
        .env_remove("PCHA_THREADS")
        .output()
        .unwrap()
}

fn write_data(dir: &Path, name: &str, n: usize, seed: u64) {
    let data = gen_additive(n, 2, Target::Harmonic, 0.3, seed);
    let mut s = String::from("x1,x2,y\n");
    for (x, y) in data.x.iter().zip(&data.y) {
        s.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(x[0]),
            fmt_f64(x[1]),
            fmt_f64(*y)
        ));
    }
    std::fs::write(dir.join(name), s).unwrap();
}

#[test]
fn fit_writes_summary_predictions_and_beta() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), "train.csv", 40, 1);
    write_data(dir.path(), "test.csv", 10, 2);
    let out = pcha(
        &[
            "fit",
            "--mode",
            "hagl",
            "--loss",
            "mse",
            "--folds",
            "3",
            "--seed",
            "7",
            "--test",
            "test.csv",
            "--emit-beta",
            "beta.csv",
            "train.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["mode"], "hagl");
    assert!(summary["constraint_residual"].as_f64().unwrap() <= 1e-3);
    for key in [
        "selected_regularization",
        "alpha_l1",
        "alpha_l2",
        "beta_l1",
        "j_n",
        "training_risk",
    ] {
        assert!(summary[key].is_number(), "{key}");
    }
    let pred =
        parse_table(std::fs::File::open(dir.path().join("predictions.csv")).unwrap()).unwrap();
    assert_eq!(pred.rows.len(), 10);
    // N = 40 · (2² − 1) coefficients, with ‖β‖₁ matching the summary.
    let beta = std::fs::read_to_string(dir.path().join("beta.csv")).unwrap();
    let values: Vec<f64> = beta
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 120);
    let l1: f64 = values.iter().map(|v| v.abs()).sum();
    assert!((l1 - summary["beta_l1"].as_f64().unwrap()).abs() <= 1e-9 * l1);
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), "train.csv", 12, 3);
    let missing = pcha(&["fit", "--response", "outcome", "train.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("'outcome'"));

    std::fs::write(dir.path().join("bad.csv"), "x,y\n1,2\n3,oops\n").unwrap();
    let bad = pcha(&["fit", "bad.csv"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));

    assert_eq!(
        pcha(&["fit", "--mode", "lasso", "train.csv"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let preset = pcha(&["study", "ate", "--preset", "huge"], dir.path());
    assert_eq!(preset.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&preset.stderr).contains("desk, paper"));
    assert_eq!(
        pcha(&["fit", "nowhere.csv"], dir.path()).status.code(),
        Some(1)
    );

    std::fs::write(dir.path().join("cfg.json"), r#"{"n": 30, "bogus": 1}"#).unwrap();
    assert_eq!(
        pcha(&["study", "ate", "--config", "cfg.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn study_output_is_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"ds":[1],"ns":[20,40,80],"replicates":2,"targets":["linear"],"skip":[],"modes":["hal","har","hagl"],
        "noise_sd":0.3,"n_test":50,"folds":3,"hagl_selection":"warm_start","seed":4,
        "solver":{"max_iter":100,"step_init":0.5,"step_shrink":0.5,"step_floor":1e-12,"grad_tol":1e-8,"risk_tol":1e-8,
                  "hagl_method":"preconditioned","hagl_refine_max_rank":0}}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let mut outputs = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = pcha(
            &[
                "--threads",
                threads,
                "study",
                "rates",
                "--config",
                "cfg.json",
                "--out",
                sub,
                "--svg",
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(std::fs::read(dir.path().join(sub).join("rates.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/rates.json")).unwrap())
            .unwrap();
    assert_eq!(report["master_seed"], 4);
    assert_eq!(report["config"]["ns"], serde_json::json!([20, 40, 80]));
    assert!(std::fs::read_to_string(dir.path().join("a/rates.svg"))
        .unwrap()
        .starts_with("<svg"));
}
