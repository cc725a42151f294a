//! The `shapevm` binary: exit statuses, output, and report round trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapevm::metrics::RunRecord;
use tempfile::TempDir;

fn shapevm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapevm")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const LOOP: &str = "var o = {n: 0}; var i = 0; while (i < 30) { o.n = o.n + i; i = i + 1; } print(o.n, \"done\");";

#[test]
fn run_prints_program_output() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "hello.mjs", "print(\"hello\", 1 + 2);");
    let o = shapevm(&["run", s(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "hello 3\n");
}

#[test]
fn every_mode_prints_the_same() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "loop.mjs", LOOP);
    let want = stdout(&shapevm(&["run", s(&p), "--mode", "oracle"]));
    assert_eq!(want, "435 done\n");
    for args in [["--mode", "pic"], ["--mode", "typed"], ["--maxshapes", "inf"], ["--maxvers", "1"]] {
        let o = shapevm(&["run", s(&p), args[0], args[1], "--assert-contexts"]);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert_eq!(stdout(&o), want, "{args:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.mjs");
    assert_eq!(shapevm(&["run", s(&missing)]).status.code(), Some(3));
    let bad = write(&dir, "bad.mjs", "var = ;");
    assert_eq!(shapevm(&["run", s(&bad)]).status.code(), Some(1));
    let throws = write(&dir, "throws.mjs", "print(1); var o = null; print(o.x);");
    let o = shapevm(&["run", s(&throws)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o), "1\n");
    assert!(!o.stderr.is_empty());
    assert_eq!(shapevm(&["run", s(&bad), "--mode", "fast"]).status.code(), Some(64));
    assert_eq!(shapevm(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(shapevm(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_metrics_json_parses() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "loop.mjs", LOOP);
    let out = dir.path().join("m.json");
    let o = shapevm(&["run", s(&p), "--metrics", "json", "--metrics-out", s(&out), "--warmup", "2", "--iters", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let r: RunRecord = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.program, "loop.mjs");
    assert_eq!((r.config.warmup, r.config.iters), (2, 3));
    assert!(r.counters.property_reads > 0);
}

#[test]
fn bench_reports_default_configs() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "loop.mjs", LOOP);
    let o = shapevm(&["bench", s(&p), "--warmup", "1", "--iters", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<RunRecord> = serde_json::from_str(&stdout(&o)).unwrap();
    let labels: Vec<String> = rows.iter().map(RunRecord::label).collect();
    assert_eq!(labels, ["pic_untyped", "typed/0", "typed/2", "typed/inf"]);
    assert_eq!(shapevm(&["bench", s(&p), "--config", "typed/x"]).status.code(), Some(64));
}

#[test]
fn compare_reads_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "loop.mjs", LOOP);
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let args = ["--warmup", "1", "--iters", "1", "--config", "pic,typed/2"];
    assert!(shapevm(&[&["bench", s(&p), "--metrics-out", s(&json)][..], &args].concat()).status.success());
    assert!(shapevm(&[&["bench", s(&p), "--metrics", "csv", "--metrics-out", s(&csv)][..], &args].concat()).status.success());
    for report in [&json, &csv] {
        let o = shapevm(&["compare", s(report)]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        assert!(text.contains("typed/2") && text.contains("pic_untyped"), "{text}");
    }
    let o = shapevm(&["compare", s(&csv), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 2);

    let other = write(&dir, "other.mjs", "print(1);");
    let other_json = dir.path().join("o.json");
    assert!(shapevm(&["bench", s(&other), "--metrics-out", s(&other_json), "--warmup", "0", "--iters", "1"]).status.success());
    assert_eq!(shapevm(&["compare", s(&json), s(&other_json)]).status.code(), Some(2));
    let junk = write(&dir, "junk.json", "{not json");
    assert_eq!(shapevm(&["compare", s(&junk)]).status.code(), Some(1));
}

#[test]
fn metrics_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "loop.mjs", LOOP);
    let once = || {
        let o = shapevm(&["bench", s(&p), "--warmup", "1", "--iters", "2"]);
        let mut rows: Vec<RunRecord> = serde_json::from_str(&stdout(&o)).unwrap();
        for r in &mut rows {
            r.counters.wall_time_ns = 0;
        }
        serde_json::to_string(&rows).unwrap()
    };
    assert_eq!(once(), once());
}
