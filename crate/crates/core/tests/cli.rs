mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tsnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsnsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn validate_accepts_every_bundled_scenario() {
    let files = common::bundled();
    let mut args = vec!["validate"];
    args.extend(files.iter().map(|p| path(p)));
    let out = tsnsim(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.contains(": ok (")).count(),
        files.len()
    );
}

#[test]
fn syntax_error_reports_position_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "format = \"tsnsim/1\"\nname = \n").unwrap();
    let out = tsnsim(&["validate", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:2:"), "{err}");
}

#[test]
fn semantic_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(common::scenario_path("credit-trace.toml"))
        .unwrap()
        .replace("idle_slope_fraction = 0.3", "idle_slope_fraction = 0.95");
    let f = dir.path().join("over.toml");
    fs::write(&f, text).unwrap();
    let out = tsnsim(&["run", path(&f)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("85%"));
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let scenario = common::scenario_path("credit-trace.toml");
    let out = tsnsim(&["run", path(&scenario), "--out", path(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_identical_outputs_for_the_same_seed() {
    let scenario = common::scenario_path("pathology-123.toml");
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let out = tsnsim(&[
            "run",
            path(&scenario),
            "--seed",
            "4",
            "--event-log",
            "--out",
            path(d.path()),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for file in ["kpi.csv", "summary.json", "events.log"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty(), "{file} is empty");
        assert_eq!(a, b, "{file} differs between runs");
    }
    let kpi = fs::read_to_string(dirs[0].path().join("kpi.csv")).unwrap();
    assert!(kpi.starts_with("flow,class,kind,smd_ns,smj_ns,samples\n"));
    assert_eq!(kpi.lines().count(), 5);
}

#[test]
fn matrix_rows_follow_tuple_order() {
    let d = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("pathology-123.toml");
    let out = tsnsim(&[
        "matrix",
        path(&scenario),
        "--modes",
        "frozen,nonfrozen",
        "--fps",
        "without-hr",
        "--gbs",
        "on,off",
        "--seeds",
        "1..2",
        "--duration",
        "10ms",
        "--out",
        path(d.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(d.path().join("matrix.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    // 2 modes x 2 guardband settings x 2 seeds, 4 flows each.
    assert_eq!(rows.len(), 32);
    let keys: Vec<String> = rows.iter().step_by(4).map(|r| r[..4].join(",")).collect();
    assert_eq!(keys[0], "frozen,without-hr,on,1");
    assert_eq!(keys[1], "frozen,without-hr,on,2");
    assert_eq!(keys[2], "frozen,without-hr,off,1");
    assert_eq!(keys[7], "nonfrozen,without-hr,off,2");
}

#[test]
fn trace_restricts_to_requested_port() {
    let d = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("pathology-123.toml");
    let out = tsnsim(&[
        "trace",
        path(&scenario),
        "--port",
        "sw->listener",
        "--duration",
        "2ms",
        "--out",
        path(d.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(d.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("time_ns,port,class,credit_bits"));
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    assert!(body
        .iter()
        .all(|l| l.split(',').nth(1) == Some("sw->listener")));
}
