//! End-to-end checks of the `qsgd` binary: exit codes, output schemas,
//! stdin handling, and byte-level reproducibility.

use std::io::Write;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qsgd"))
}

fn run_with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn qsgd");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn estimate_reads_stdin_and_prints_json() {
    // low-discrepancy stream on (0,1): median 0.5, density 1
    let mut data = String::from("# comment line\n\n");
    for i in 1..=2000u64 {
        data.push_str(&format!(
            "{}\n",
            (i as f64 * 0.618_033_988_749_894_9).fract()
        ));
    }
    let out = run_with_stdin(&["estimate", "--tau", "1/2", "--eta", "0.01"], &data);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["n"], 2000);
    for field in ["theta", "f_hat", "ci_lo", "ci_hi"] {
        assert!(json[field].is_number(), "missing {field}");
    }
    assert!((json["theta"].as_f64().unwrap() - 0.5).abs() < 0.2);
    assert!(json["ci_lo"].as_f64() < json["ci_hi"].as_f64());
}

#[test]
fn estimate_rejects_malformed_data_with_code_2() {
    let out = run_with_stdin(
        &["estimate", "--tau", "1/2", "--eta", "0.01"],
        "1.0\nnot-a-number\n",
    );
    assert_eq!(out.status.code(), Some(2));
    // and an empty stream is a numeric failure, not a usage failure
    let out = run_with_stdin(&["estimate", "--tau", "1/2", "--eta", "0.01"], "");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_code_1() {
    let out = run_with_stdin(&["estimate", "--tau", "1/2", "--no-such-flag"], "");
    assert_eq!(out.status.code(), Some(1));
    let out = run_with_stdin(&["coverage", "--dist", "pareto:1,1"], "");
    assert_eq!(out.status.code(), Some(1));
    let out = run_with_stdin(&["frobnicate"], "");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run_with_stdin(&["--help"], "");
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("estimate"));
}

#[test]
fn coverage_csv_schema_and_reproducibility() {
    let dir = std::env::temp_dir().join("qsgd-cli-test-coverage");
    std::fs::create_dir_all(&dir).unwrap();
    let args = |out: &str, threads: &str| {
        vec![
            "coverage".to_string(),
            "--dist".into(),
            "beta:2,3".into(),
            "--tau".into(),
            "3/4".into(),
            "--eta".into(),
            "0.01".into(),
            "--n".into(),
            "300,900".into(),
            "--reps".into(),
            "12".into(),
            "--alpha".into(),
            "0.05".into(),
            "--seed".into(),
            "42".into(),
            "--threads".into(),
            threads.into(),
            "--out".into(),
            dir.join(out).to_string_lossy().into_owned(),
        ]
    };
    let run = |a: Vec<String>| {
        let out = bin().args(&a).output().unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(args("a.csv", "1"));
    run(args("b.csv", "3"));
    let a = std::fs::read_to_string(dir.join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.join("b.csv")).unwrap();
    assert_eq!(a, b, "reports differ across worker counts");
    let mut lines = a.lines();
    assert_eq!(
        lines.next(),
        Some("eta,n,coverage,half_width,mse,ks,failed")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn oracle_emits_distribution_csv_and_verdicts() {
    let dir = std::env::temp_dir().join("qsgd-cli-test-oracle");
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("pi.csv");
    let out = bin()
        .args([
            "oracle",
            "--dist",
            "uniform:0,1",
            "--tau",
            "1/2",
            "--eta",
            "0.01",
            "--checks",
            "all",
            "--out",
            csv_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let verdicts = String::from_utf8_lossy(&out.stdout);
    for check in [
        "balance:",
        "drift:",
        "mgf(",
        "tail(",
        "moments:",
        "normality:",
    ] {
        assert!(verdicts.contains(check), "missing {check} in:\n{verdicts}");
    }
    assert!(verdicts.contains("PASS"));
    assert!(!verdicts.contains("FAIL"), "unexpected FAIL:\n{verdicts}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,theta,pi"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 3);
    // probabilities sum to 1
    let total: f64 = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn oracle_radius_override_and_tail_fail_verdict() {
    // an explicit radius far below the tail cut makes the tail check report
    // FAIL with the reason, without aborting the run
    let out = bin()
        .args([
            "oracle",
            "--dist",
            "uniform:0,1",
            "--tau",
            "1/2",
            "--eta",
            "0.01",
            "--radius",
            "120",
            "--checks",
            "balance,tail",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let verdicts = String::from_utf8_lossy(&out.stderr);
    assert!(verdicts.contains("balance:"), "{verdicts}");
    assert!(verdicts.contains("tail(K0=5,d=0): FAIL"), "{verdicts}");
    assert!(verdicts.contains("truncation radius"), "{verdicts}");
    // CSV on stdout spans exactly the requested window
    let csv = String::from_utf8_lossy(&out.stdout);
    assert_eq!(csv.lines().count(), 1 + 241);
}

#[test]
fn estimate_reads_from_a_file() {
    let dir = std::env::temp_dir().join("qsgd-cli-test-input");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("data.txt");
    let mut data = String::new();
    for i in 1..=500u64 {
        data.push_str(&format!(
            "{}\n",
            (i as f64 * 0.618_033_988_749_894_9).fract()
        ));
    }
    std::fs::write(&path, data).unwrap();
    let out = bin()
        .args(["estimate", "--tau", "1/2", "--eta", "0.05", "--input"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["n"], 500);
}

#[test]
fn relative_out_paths_resolve_against_env_dir() {
    let dir = std::env::temp_dir().join("qsgd-cli-test-envdir");
    std::fs::create_dir_all(&dir).unwrap();
    let out = bin()
        .args([
            "mse",
            "--dist",
            "uniform:0,1",
            "--tau",
            "1/2",
            "--eta",
            "0.01",
            "--n",
            "0,500",
            "--reps",
            "8",
            "--seed",
            "1",
            "--format",
            "json",
            "--out",
            "points.json",
        ])
        .env("QSGD_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let body = std::fs::read_to_string(dir.join("points.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&body).unwrap();
    // n = 0 checkpoint reports the squared start offset (0.5² = 0.25)
    assert_eq!(json[0]["n"], 0);
    assert!((json[0]["mse"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn normality_csv_has_one_row_per_bin() {
    let out = bin()
        .args([
            "normality",
            "--dist",
            "uniform:0,1",
            "--tau",
            "1/2",
            "--eta",
            "0.04,0.01",
            "--n",
            "2000",
            "--reps",
            "40",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let body = String::from_utf8_lossy(&out.stdout);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("eta,n,ks,bin_lo,bin_hi,count"));
    assert_eq!(lines.count(), 2 * 40); // two etas, 40 bins each
}
