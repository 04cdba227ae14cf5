//! End-to-end tests of the binary via std::process.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn tmp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("crb-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn seeded_sample_files_are_byte_identical() {
    let a = tmp_path("sample-a.csv");
    let b = tmp_path("sample-b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "sample", "--family", "gg", "--n", "2", "--s", "0.5", "--n-draws", "500",
            "--seed", "42", "--output", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (da, db) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(da, db);
    let text = String::from_utf8(da).unwrap();
    assert!(text.starts_with("# config: "), "config echo missing");
    assert_eq!(text.lines().nth(1), Some("x1,x2"));
    assert_eq!(text.lines().count(), 502);
    std::fs::remove_file(a).ok();
    std::fs::remove_file(b).ok();
}

#[test]
fn gamma_samples_are_positive() {
    let out = run(&[
        "sample", "--family", "gamma", "--n", "3", "--m", "2", "--sigma2", "1",
        "--n-draws", "200", "--seed", "5",
    ]);
    assert!(out.status.success());
    for line in stdout(&out).lines().skip(2) {
        for v in line.split(',') {
            assert!(v.parse::<f64>().unwrap() > 0.0, "nonpositive draw {v}");
        }
    }
}

#[test]
fn elliptical_sample_covariance_matches_sigma() {
    let out = run(&[
        "sample", "--family", "gaussian", "--n", "2", "--sigma2", "2.0",
        "--n-draws", "20000", "--seed", "11",
    ]);
    assert!(out.status.success());
    let rows: Vec<Vec<f64>> = stdout(&out)
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..2)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    for i in 0..2 {
        for j in 0..2 {
            let cov = rows
                .iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .sum::<f64>()
                / n;
            let want = if i == j { 2.0 } else { 0.0 };
            assert!((cov - want).abs() < 0.1, "cov[{i}][{j}] = {cov}");
        }
    }
}

#[test]
fn sweep_has_contract_columns() {
    let out = run(&["sweep-s", "--s-min", "0.5", "--s-max", "1.5", "--steps", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(
        lines.next().unwrap(),
        "s,n,crb_known_s,crb_unknown_s,gaussian_level,a3_estimate"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn sweep_outside_working_range_is_numeric_domain_error() {
    let out = run(&["sweep-s", "--s-min", "0.01", "--s-max", "2", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("range"));
}

#[test]
fn coeffs_matches_closed_form_example() {
    let out = run(&["coeffs", "--family", "gg", "--n", "1", "--s", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("closed-form,unavailable,0.833333333333,0.166666666667"), "{text}");
}

#[test]
fn coeffs_json_embeds_config() {
    let out = run(&[
        "coeffs", "--family", "student-t", "--n", "2", "--nu", "5", "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["config"]["command"], "coeffs");
    assert_eq!(v["config"]["n"], 2);
    let a1 = v["quadrature"]["a1"].as_f64().unwrap();
    assert!((a1 - 7.0 / 18.0).abs() < 1e-8, "a1 = {a1}");
}

#[test]
fn crb_gamma_example_values() {
    let out = run(&[
        "crb", "--family", "gamma", "--m", "2", "--sigma2", "1", "--n", "10",
        "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let crb_m = v["report"]["crb_m"].as_f64().unwrap();
    let crb_s2 = v["report"]["crb_sigma2"].as_f64().unwrap();
    assert!((crb_m - 0.1).abs() < 1e-10);
    assert!(crb_s2 > 0.2);
}

#[test]
fn crb_unknown_s_exceeds_known() {
    let out = run(&[
        "crb", "--family", "gg", "--n", "1", "--s", "0.5", "--unknown-s", "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let known = v["report"]["crb_sigma2"].as_f64().unwrap();
    let unknown = v["report"]["crb_sigma2_unknown_s"].as_f64().unwrap();
    assert!(unknown > known, "{unknown} !> {known}");
    assert!(v["report"]["a3_estimate"].as_f64().unwrap() < 0.0);
}

#[test]
fn verify_quick_passes_and_fault_fails() {
    let out = run(&["verify", "--quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("# summary: "));

    let out = run(&["verify", "--quick", "--inject-fault", "bad-normalization"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("FAIL,normalization["), "failing check is named: {text}");

    let out = run(&["verify", "--inject-fault", "made-up"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_numeric_exit_codes() {
    let out = run(&["coeffs", "--family", "gamma", "--n", "2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["crb", "--family", "student-t", "--n", "2", "--nu", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    // Negative sigma2 is rejected by the covariance map.
    let out = run(&["sample", "--family", "gaussian", "--n", "1", "--sigma2=-1"]);
    assert_eq!(out.status.code(), Some(2));
}
