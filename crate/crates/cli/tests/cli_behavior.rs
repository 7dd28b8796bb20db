//! End-to-end behavior of the `aipw` binary: exit codes, report files,
//! determinism.

use std::path::Path;
use std::process::{Command, Output};

fn aipw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aipw"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> Output {
    let out = aipw(args);
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn help_exits_zero() {
    let out = aipw(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
    for sub in ["simulate", "estimate"] {
        let out = aipw(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
    }
}

#[test]
fn invalid_setting_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    let out = aipw(&[
        "simulate", "--setting", "3", "--n", "200", "--reps", "3", "--estimators", "naive",
        "--seed", "7", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists(), "error paths must not write the output file");
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = aipw(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_data_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    let out = aipw(&[
        "estimate", "--data", "/no/such/file.csv", "--outcome", "y", "--treat", "t",
        "--estimand", "acet", "--method", "naive", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_path.exists());
}

#[test]
fn unwritable_output_is_data_error_and_writes_nothing() {
    let out = aipw(&[
        "simulate", "--setting", "1", "--n", "100", "--reps", "2", "--estimators", "naive",
        "--seed", "1", "--oracle-draws", "10000", "--out", "/no-such-dir/r.json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!Path::new("/no-such-dir/r.json").exists());
}

#[test]
fn simulate_naive_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    run_ok(&[
        "simulate", "--setting", "1", "--n", "200", "--reps", "3", "--estimators", "naive",
        "--seed", "7", "--alpha", "0.05", "--oracle-draws", "20000", "--out",
        out_path.to_str().unwrap(),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(doc["seed"], 7);
    let naive = &doc["summaries"][0];
    assert_eq!(naive["estimator"], "naive");
    assert!(naive["bias"].as_f64().unwrap().is_finite());
    assert!(doc["true_effect"].as_f64().unwrap().is_finite());
}

#[test]
fn simulate_csv_format_has_spec_header() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.csv");
    run_ok(&[
        "simulate", "--setting", "1", "--n", "100", "--reps", "2", "--estimators",
        "naive,droracle", "--seed", "3", "--oracle-draws", "10000", "--format", "csv", "--out",
        out_path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("estimator,bias,coverage,mc_sd,est_sd,mse\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(), "--setting".into(), "1".into(), "--n".into(), "150".into(),
            "--reps".into(), "4".into(), "--estimators".into(), "naive,droracle,drss".into(),
            "--seed".into(), "11".into(), "--oracle-draws".into(), "20000".into(),
            "--threads".into(), "1".into(), "--out".into(), out.to_str().unwrap().into(),
        ]
    };
    let run = |path: &Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_aipw")).args(args(path)).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&a);
    run(&b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn threaded_run_matches_sequential_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq.json");
    let par = dir.path().join("par.json");
    for (threads, path) in [("1", &seq), ("4", &par)] {
        run_ok(&[
            "simulate", "--setting", "1", "--n", "150", "--reps", "6", "--estimators",
            "naive,droracle", "--seed", "5", "--oracle-draws", "20000", "--threads", threads,
            "--out", path.to_str().unwrap(),
        ]);
    }
    let load = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
    };
    let (a, b) = (load(&seq), load(&par));
    for k in 0..2 {
        for field in ["bias", "coverage", "est_sd", "mc_sd", "mse"] {
            let va = a["summaries"][k][field].as_f64().unwrap();
            let vb = b["summaries"][k][field].as_f64().unwrap();
            assert!(
                (va - vb).abs() <= 1e-12 * (1.0 + va.abs()),
                "{field}[{k}]: {va} vs {vb}"
            );
        }
    }
}

fn write_demo_csv(path: &Path, n: usize) {
    use std::fmt::Write as _;
    let mut text = String::from("y,t,a1,a2,a3,a4,s1\n");
    let mut state = 88172645463325252u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..n {
        let a: Vec<f64> = (0..4).map(|_| next() * 2.0 - 1.0).collect();
        let s1 = next();
        let t = u8::from(next() < 0.4 + 0.2 * a[0]);
        let y = 1.0 + a[0] + 0.5 * a[3] + f64::from(t) * 2.0 + (next() - 0.5) * 0.2;
        writeln!(text, "{y},{t},{},{},{},{},{s1}", a[0], a[1], a[2], a[3]).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn estimate_all_methods_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo.csv");
    write_demo_csv(&data, 300);

    for method in ["naive", "ords", "drss", "drds"] {
        let out_path = dir.path().join(format!("{method}.json"));
        run_ok(&[
            "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treat", "t",
            "--estimand", "acet", "--method", method, "--out", out_path.to_str().unwrap(),
        ]);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
        assert_eq!(doc["method"], method);
        assert_eq!(doc["estimand"], "ACET");
        let tau = doc["tau_hat"].as_f64().unwrap();
        assert!(tau.is_finite());
        assert!(doc["ci_low"].as_f64().unwrap() <= tau);
        assert!(tau <= doc["ci_high"].as_f64().unwrap());
    }
}

#[test]
fn estimate_cnn_with_series_layout_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo.csv");
    write_demo_csv(&data, 250);
    let out_path = dir.path().join("cnn.json");
    let models = dir.path().join("models");
    run_ok(&[
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treat", "t",
        "--estimand", "ace", "--method", "drcnn", "--series", "a=a1,a2,a3,a4", "--static", "s1",
        "--outcome-channels", "8,4", "--propensity-channels", "8,4", "--epochs", "8", "--seed",
        "3", "--save-models", models.to_str().unwrap(), "--out", out_path.to_str().unwrap(),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    // true effect is 2.0 by construction; a short CNN fit lands nearby
    let tau = doc["tau_hat"].as_f64().unwrap();
    assert!((tau - 2.0).abs() < 1.0, "tau = {tau}");
    for name in ["mu0.json", "mu1.json", "propensity.json"] {
        assert!(models.join(name).exists(), "missing checkpoint {name}");
    }
}

#[test]
fn estimate_rejects_oracle_methods_and_bad_save_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo.csv");
    write_demo_csv(&data, 100);
    let out_path = dir.path().join("r.json");
    let out = aipw(&[
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treat", "t",
        "--estimand", "acet", "--method", "droracle", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = aipw(&[
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treat", "t",
        "--estimand", "acet", "--method", "naive", "--save-models", "/tmp/x", "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
