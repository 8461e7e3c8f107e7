//! Integration tests driving the `verify` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verify"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("report written");
    serde_json::from_str(&text).expect("report parses")
}

#[test]
fn cancellation_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let run = verify(&["cancellation", "--m", "4", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let rep = report(&out);
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["experiment"], "cancellation");
    assert_eq!(rep["checks"][0]["verdict"], "Pass");
    // the embedded transcript carries the replayable steps
    assert_eq!(rep["checks"][0]["outputs"]["steps"], 6);
}

#[test]
fn equality_passes_at_m1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let run = verify(&[
        "equality", "--q", "5", "--m", "1", "--seed", "1", "2", "--ext-degree", "1", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let rep = report(&out);
    for check in rep["checks"].as_array().unwrap() {
        assert_eq!(check["verdict"], "Pass");
        assert_eq!(check["outputs"]["count_x"], check["outputs"]["count_xtilde"]);
    }
}

#[test]
fn equality_records_the_discrepancy_at_m3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let run = verify(&[
        "equality", "--q", "7", "--m", "3", "--seed", "9000", "9050", "--ext-degree", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(1), "a FAIL verdict must exit 1");
    let rep = report(&out);
    assert_eq!(rep["checks"][0]["verdict"], "Fail");
}

#[test]
fn reports_are_deterministic_and_diff_clean() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let run = verify(&[
            "class-table", "--q", "7", "--seed", "3", "--workers", "1",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
    }
    let diff = verify(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(diff.status.success(), "identical runs must diff clean");
    assert!(diff.stdout.is_empty());
}

#[test]
fn diff_rejects_mismatched_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    verify(&["cancellation", "--m", "2", "--out", a.to_str().unwrap()]);
    verify(&["class-table", "--q", "5", "--out", b.to_str().unwrap()]);
    let diff = verify(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(diff.status.code(), Some(4));
}

#[test]
fn shared_pencil_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (out, pencil) = (dir.path().join("e.json"), dir.path().join("p.json"));
    let run = verify(&[
        "equality", "--q", "5", "--m", "1", "--seed", "1", "2", "--ext-degree", "1",
        "--out", out.to_str().unwrap(), "--emit-pencil", pencil.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let iso_out = dir.path().join("i.json");
    let run = verify(&[
        "universal-iso", "--shared-from", pencil.to_str().unwrap(), "--seed", "8",
        "--out", iso_out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let rep = report(&iso_out);
    assert_eq!(rep["checks"][0]["verdict"], "Pass");
}

#[test]
fn bad_config_is_a_runtime_error() {
    // q = 4 is not prime, the field layer rejects it
    let run = verify(&["blowup-m1", "--q", "4", "--seed", "1"]);
    assert_eq!(run.status.code(), Some(4));
}
