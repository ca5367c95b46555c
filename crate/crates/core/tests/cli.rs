use std::path::Path;
use std::process::{Command, Output};

use diffusion_lab::cli::DEFAULT_SCENARIO;

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffusion-lab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn scenario_with(dir: &Path, from: &str, to: &str) -> String {
    assert!(DEFAULT_SCENARIO.contains(from));
    let path = dir.join("scenario.toml");
    std::fs::write(&path, DEFAULT_SCENARIO.replace(from, to)).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn plan_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["plan", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/plan.csv")).unwrap();
    assert!(csv.starts_with("m,a_m,b_m"));
    // levels 1 ..= m_max + 1
    assert_eq!(csv.lines().count(), 1 + 7);
    let report = std::fs::read_to_string(dir.path().join("run/report.txt")).unwrap();
    assert!(report.contains("status: admissible"));
    assert!(report.contains("failed checks: none"), "{report}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        for stage in ["plan", "normalform", "actions"] {
            let out = lab(&[stage, "--out", run, "--seed", "7"], dir.path());
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for name in ["plan.csv", "admissibility.csv", "exponents.csv", "truncation.csv", "actions.csv", "flat_uncoupled.csv", "report.txt"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn seed_changes_the_random_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for (run, seed) in [("a", "1"), ("b", "2")] {
        assert!(lab(&["actions", "--out", run, "--seed", seed], dir.path()).status.success());
    }
    let a = std::fs::read(dir.path().join("a/actions.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/actions.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn small_xi_is_rejected_with_the_violated_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_with(dir.path(), "xi = 4.5", "xi = 1.0");
    let out = lab(&["plan", "--scenario", &path, "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(13));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("xi_gt_8_over_r_minus_6"), "{err}");
    assert!(!dir.path().join("run/plan.csv").exists());
}

#[test]
fn failing_scale_line_downgrades_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_with(dir.path(), "delta = 1e-60", "delta = 1e-30");
    let out = lab(&["plan", "--scenario", &path, "--out", "run"], dir.path());
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.path().join("run/report.txt")).unwrap();
    assert!(report.contains("status: inadmissible: diagnostics only"), "{report}");
    assert!(report.contains("violated: delta_upper"), "{report}");
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_with(dir.path(), "seed = 1", "seed = 1\ncolour = \"red\"");
    assert_eq!(lab(&["plan", "--scenario", &path], dir.path()).status.code(), Some(2));
    let path = scenario_with(dir.path(), "L = 20.0", "L = 20.0\nc6 = 2.0");
    assert_eq!(lab(&["plan", "--scenario", &path], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["plan", "--scenario", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["sideways"], dir.path()).status.code(), Some(2));
}

#[test]
fn explain_lists_every_constant_with_its_rule() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--explain"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut names = vec![];
    for line in text.lines().skip_while(|l| *l != "[constants]").skip(1) {
        let (lhs, rule) = line.split_once('#').expect("rule comment");
        assert!(!rule.trim().is_empty());
        names.push(lhs.split('=').next().unwrap().trim().to_string());
    }
    let expected: Vec<String> = (1..=18).map(|i| format!("c{i}")).chain(["K", "L", "M", "d", "zeta", "iota"].map(String::from)).collect();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len(), "duplicate constant");
    for n in &expected {
        assert!(names.contains(n), "{n} missing");
    }
    assert_eq!(names.len(), expected.len());
}
