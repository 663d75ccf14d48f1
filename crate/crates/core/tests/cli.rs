use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fosdnn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fosdnn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is one JSON document")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_datasets_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = fosdnn(
        &[
            "generate",
            "--scenario",
            "s1",
            "--model",
            "1",
            "--xtype",
            "1",
            "--n-train",
            "20",
            "--n-test",
            "5",
            "--seed",
            "7",
        ],
        &out,
    );
    let v = summary(&o);
    assert_eq!(v["command"], "generate");
    assert_eq!(v["spec"], "S1/M1/X1");
    for f in [
        "train_covariates.csv",
        "train_responses.csv",
        "test_covariates.csv",
        "test_responses.csv",
        "metadata.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["d"], 3);
    assert_eq!(meta["n_train"], 20);
    let rows = std::fs::read_to_string(out.join("train_responses.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 20 * 100);
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    summary(&fosdnn(
        &[
            "generate",
            "--scenario",
            "s1",
            "--n-train",
            "30",
            "--n-test",
            "10",
            "--grid-size",
            "20",
        ],
        &data,
    ));
    let (trc, trr) = (data.join("train_covariates.csv"), data.join("train_responses.csv"));
    let (tec, ter) = (data.join("test_covariates.csv"), data.join("test_responses.csv"));

    for method in ["fosdnn", "linear"] {
        let m = dir.path().join(method);
        let v = summary(&fosdnn(
            &[
                "train",
                "--covariates",
                s(&trc),
                "--responses",
                s(&trr),
                "--method",
                method,
                "--epochs",
                "5",
                "--basis-size",
                "6",
            ],
            &m,
        ));
        assert_eq!(v["method"], method);
        let model = m.join("model.json");
        assert!(model.exists());
        assert!(m.join("model.normalization.json").exists());

        let p = dir.path().join(format!("{method}-pred"));
        let v = summary(&fosdnn(
            &[
                "predict",
                "--model",
                s(&model),
                "--covariates",
                s(&tec),
                "--responses",
                s(&ter),
            ],
            &p,
        ));
        assert_eq!(v["n"], 10);
        let lines = std::fs::read_to_string(p.join("predictions.csv")).unwrap();
        assert!(lines.starts_with("sample_id,t,y_hat\n"));
        assert_eq!(lines.lines().count(), 1 + 10 * 20);

        let e = dir.path().join(format!("{method}-eval"));
        let v = summary(&fosdnn(
            &[
                "evaluate",
                "--model",
                s(&model),
                "--covariates",
                s(&tec),
                "--responses",
                s(&ter),
            ],
            &e,
        ));
        assert!(v["mispe"].as_f64().unwrap() > 0.0);
        assert!(e.join("report.json").exists());
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"scenario": "s1", "unknown_key": 1}"#).unwrap();
    let o = fosdnn(&["generate", "--config", s(&cfg)], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));

    let o = fosdnn(&["generate"], &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(
        &cfg,
        r#"{"data": {"covariates": "/nonexistent.csv", "responses": "/nonexistent2.csv"}}"#,
    )
    .unwrap();
    let o = fosdnn(&["train", "--config", s(&cfg)], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing path"));

    let o = fosdnn(&["bogus"], &dir.path().join("d"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_input_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("c.csv");
    let resp = dir.path().join("r.csv");
    std::fs::write(&cov, "sample_id,x1\na,1\nb,2\n").unwrap();
    std::fs::write(&resp, "sample_id,t,y\na,0.5,1\nb,0.5,oops\n").unwrap();
    let out = dir.path().join("out");
    let o = fosdnn(&["train", "--covariates", s(&cov), "--responses", s(&resp)], &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 3"), "{err}");
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn singular_fit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("c.csv");
    let resp = dir.path().join("r.csv");
    std::fs::write(&cov, "sample_id,x1\na,1\nb,2\n").unwrap();
    std::fs::write(&resp, "sample_id,t,y\na,0.5,1\na,1,2\nb,0.5,3\nb,1,4\n").unwrap();
    let o = fosdnn(
        &[
            "train",
            "--covariates",
            s(&cov),
            "--responses",
            s(&resp),
            "--method",
            "linear",
            "--lambda",
            "0",
        ],
        &dir.path().join("out"),
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn cv_and_rate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cv.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": "s1", "model": 2, "n_train": 30, "grid_size": 20,
            "grid": [{"method": "linear", "K": 5}, {"method": "linear", "K": 8}]}"#,
    )
    .unwrap();
    let out = dir.path().join("cv");
    let v = summary(&fosdnn(&["cv", "--config", s(&cfg), "--k", "3", "--seed", "1"], &out));
    assert_eq!(v["candidates"], 2);
    let table: Value = serde_json::from_str(&std::fs::read_to_string(out.join("cv_table.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert_eq!(table["selected"], v["selected"]);

    let out = dir.path().join("rate");
    let v = summary(&fosdnn(
        &[
            "rate",
            "--scenario",
            "s1",
            "--method",
            "linear",
            "--n-list",
            "20,80",
            "--reps",
            "1",
            "--n-test",
            "20",
            "--grid-size",
            "20",
        ],
        &out,
    ));
    assert!(v["slope"].is_number());
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_reports_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let v = summary(&fosdnn(
        &[
            "experiment",
            "--scenario",
            "s1a",
            "--model",
            "2",
            "--method",
            "linear",
            "--reps",
            "2",
            "--n-train",
            "40",
            "--n-test",
            "10",
        ],
        &out,
    ));
    assert_eq!(v["spec"], "S1A/M2/X1");
    assert_eq!(v["per_replicate"].as_array().unwrap().len(), 2);
    assert_eq!(v["tuning"], "fixed");
    let table = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.contains("S1A/M2/X1") && table.contains("linear"));
}

#[test]
fn network_experiment_tunes_once_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let v = summary(&fosdnn(
        &[
            "experiment",
            "--scenario",
            "s1",
            "--reps",
            "2",
            "--n-train",
            "12",
            "--n-test",
            "6",
            "--grid-size",
            "10",
            "--epochs",
            "2",
        ],
        &out,
    ));
    assert_eq!(v["tuning"], "once");
    let tables: Value = serde_json::from_str(&std::fs::read_to_string(out.join("cv_tables.json")).unwrap()).unwrap();
    assert_eq!(tables.as_array().unwrap().len(), 1);
    assert_eq!(tables[0]["rows"].as_array().unwrap().len(), 45);
}
