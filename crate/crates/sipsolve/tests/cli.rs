use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sipsolve::config::{parse_document, ExperimentConfig};

fn sipsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sipsolve"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SMALL_CHECKS: [&str; 18] = [
    "--set",
    "checks.adjoint_trials=3",
    "--set",
    "checks.unbiased_m=2000",
    "--set",
    "checks.unbiased_small_m=200",
    "--set",
    "checks.oracle_m=10000",
    "--set",
    "checks.unbiased_tol=0.5",
    "--set",
    "checks.directional_samples=200",
    "--set",
    "checks.directions=2",
    "--set",
    "checks.bound_replicates=2",
    "--set",
    "eval_n=300",
];

fn small_flr(dir: &Path) -> Output {
    sipsolve(&[
        "flr",
        "--out",
        dir.to_str().unwrap(),
        "--replicates",
        "3",
        "--seed",
        "9",
        "--set",
        "flr.n_samples=300",
        "--set",
        "flr.fine_n=200",
        "--set",
        "flr.obs_n=50",
        "--set",
        "eval_n=500",
    ])
}

#[test]
fn experiment_writes_the_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = small_flr(tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fitted_r0.csv",
            "fitted_r1.csv",
            "fitted_r2.csv",
            "manifest.json",
            "metrics.csv",
            "summary.csv"
        ]
    );
    let fitted = fs::read_to_string(tmp.path().join("fitted_r1.csv")).unwrap();
    assert_eq!(fitted.lines().count(), 201);
    assert!(!fitted.contains('\r'));
}

#[test]
fn summary_agrees_with_metric_rows() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_flr(tmp.path())), 0);
    let mut metrics = csv::Reader::from_path(tmp.path().join("metrics.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = metrics.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    let mut summary = csv::Reader::from_path(tmp.path().join("summary.csv")).unwrap();
    for rec in summary.records().map(Result::unwrap) {
        let method = &rec[1];
        let mse: Vec<f64> = rows
            .iter()
            .filter(|r| &r[1] == method)
            .map(|r| r[4].parse().unwrap())
            .collect();
        let mean = mse.iter().sum::<f64>() / mse.len() as f64;
        let sd =
            (mse.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mse.len() - 1) as f64).sqrt();
        let got_mean: f64 = rec[3].parse().unwrap();
        let got_2sd: f64 = rec[4].parse().unwrap();
        assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((got_2sd - 2.0 * sd).abs() <= 1e-12 * sd.max(1.0));
    }
}

#[test]
fn manifest_round_trips_through_the_config_parser() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_flr(tmp.path())), 0);
    let text = fs::read_to_string(tmp.path().join("manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    let doc = parse_document(&text, "manifest.json").unwrap();
    let config: ExperimentConfig = serde_json::from_value(doc).unwrap();
    config.validate().unwrap();
    assert_eq!(config.seed, 9);
    assert_eq!(config.replicates, 3);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 3);
    assert_eq!(
        manifest["seeds"][1]["seed"],
        9u64 ^ 2u64.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    );
}

#[test]
fn config_problems_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(
        code(&sipsolve(&[
            "flr",
            "--out",
            dir,
            "--set",
            "solver.sgd.etaa=1"
        ])),
        2
    );
    assert_eq!(
        code(&sipsolve(&["deconv", "--out", dir, "--replicates", "0"])),
        2
    );
    assert_eq!(code(&sipsolve(&["flr", "--bogus"])), 2);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"replicates\": 2,\n  \"flr\": {\"nsr\": }\n}\n").unwrap();
    let out = sipsolve(&["flr", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let wrong = tmp.path().join("wrong.json");
    fs::write(&wrong, "{\"experiment\": \"deconv\"}").unwrap();
    assert_eq!(
        code(&sipsolve(&["flr", "--config", wrong.to_str().unwrap()])),
        2
    );

    let out = sipsolve(&["check", "--set", "checks.unbiased_m=0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn runtime_failures_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = sipsolve(&[
        "deconv",
        "--replicates",
        "1",
        "--set",
        "eval_n=10",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn checks_pass_and_fail_with_exit_status() {
    let mut args = vec!["check"];
    args.extend(SMALL_CHECKS);
    let out = sipsolve(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 6);

    args.extend(["--set", "checks.adjoint_tol=0"]);
    let out = sipsolve(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 1);
    assert!(stdout.contains("FAIL adjoint-identity-flr"), "{stdout}");
}
