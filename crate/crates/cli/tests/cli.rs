//! End-to-end tests of the command-line interface and its exit-code
//! contract.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmstab"))
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("mmstab-cli-{}-{name}", std::process::id()));
    p
}

#[test]
fn selftest_reports_are_byte_identical() {
    let r1 = tmp("self1.json");
    let r2 = tmp("self2.json");
    for r in [&r1, &r2] {
        let out = bin()
            .args(["selftest", "--seed", "7", "--report"])
            .arg(r)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&r1).unwrap();
    let b = std::fs::read(&r2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "selftest reports must be byte-identical");
}

#[test]
fn check_exit_codes_follow_certificates() {
    // degenerate upper multiplier: strict certificate fails, weaker passes
    let out = bin().args(["check", "p3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL  jacobian uniqueness"));
    assert!(stdout.contains("PASS  property A"));

    let out = bin().args(["check", "p1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn unknown_problem_is_a_usage_error() {
    let out = bin().args(["check", "no-such-problem"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generated_documents_round_trip_through_files() {
    let doc = tmp("gen.json");
    let out = bin()
        .args(["gen"])
        .arg(&doc)
        .args(["--dims", "3,2,1,2,1,2", "--alpha", "1", "--beta-plus", "1", "--seed", "11"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar = doc.with_extension("solution.json");
    let out = bin()
        .args(["check"])
        .arg(&doc)
        .args(["--start"])
        .arg(&sidecar)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn infeasible_generator_request_is_a_usage_error() {
    let doc = tmp("bad.json");
    let out = bin()
        .args(["gen"])
        .arg(&doc)
        .args(["--dims", "1,1,0,3,0,0", "--beta-plus", "3", "--alpha", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn path_tracks_the_builtin_family() {
    let out = bin()
        .args([
            "path",
            "p3",
            "--theta-start",
            "0.01",
            "--theta-end",
            "0.1",
            "--nodes",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    // starting at the degenerate parameter value must fail the strict mode
    let out = bin()
        .args(["path", "p3", "--theta-start", "0.0", "--theta-end", "0.05"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_flags_the_negative_control() {
    let out = bin().args(["oracle", "neg-saddle"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["oracle", "p1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
