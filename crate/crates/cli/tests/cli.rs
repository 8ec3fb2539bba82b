use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slip(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slip"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const DISK_FROM_OUTSIDE: &str = r#"{
  "name": "disk",
  "n": 2,
  "objective": { "kind": "linear", "c": [1.0, 0.5] },
  "constraints": [{ "kind": "ball", "center": [0.0, 0.0], "radius": 1.0 }],
  "start": [2.0, 0.0]
}"#;

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = slip(
        &[
            "generate", "socp", "--n", "8", "--l", "2", "--seed", "3", "-o", "p.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = slip(
        &[
            "solve", "p.json", "--budget", "500", "--report", "r.json", "--trace", "t.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(report["f_final"].as_f64().unwrap() < report["f_initial"].as_f64().unwrap());
    let trace = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(trace.starts_with("k,"));
    assert_eq!(trace.lines().count(), 501);
}

#[test]
fn stochastic_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let args = |report: &'static str| {
        [
            "solve",
            "fixture:ball_qp_3",
            "--mode",
            "stochastic",
            "--noise",
            "gaussian:0.3",
            "--seed",
            "5",
            "--budget",
            "300",
            "--report",
            report,
        ]
    };
    assert!(slip(&args("a.json"), dir.path()).status.success());
    assert!(slip(&args("b.json"), dir.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
}

#[test]
fn infeasible_start_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "disk.json", DISK_FROM_OUTSIDE);
    let out = slip(&["solve", "disk.json", "--budget", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phase1_repairs_the_start() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "disk.json", DISK_FROM_OUTSIDE);
    let out = slip(&["phase1", "disk.json", "-o", "fixed.json"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "feasible");
    let out = slip(&["solve", "fixed.json", "--budget", "200"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn phase1_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = slip(
        &["phase1", "fixture:infeasible_pair", "--max-iter", "50"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bench.toml",
        r#"
name = "small"
output_dir = "out"
mode = "stochastic"
seeds = [1, 2]
budget = 300
[problem]
source = "fixture"
name = "two_balls"
[noise]
kind = "gaussian"
sigma = 0.1
"#,
    );
    let out = slip(&["bench", "bench.toml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("out/two_balls_table.txt")).unwrap();
    assert!(table.starts_with("run"));
    assert!(table.contains("deterministic"));
}

#[test]
fn rejects_unknown_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = slip(
        &["solve", "fixture:two_balls", "--noise", "cauchy:1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}
