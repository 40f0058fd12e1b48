use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamreuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_fixture() {
    let o = run(&["validate", path(&fixture("pipeline-a.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn validate_rejects_source_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(
        &file,
        r#"{"name":"bad","tasks":[
            {"id":"s","type":"Src","config":"source"},
            {"id":"k","type":"Out","config":"sink"},
            {"id":"lone","type":"Src","config":"source"}],
           "streams":[{"from":"s","to":"k"}]}"#,
    )
    .unwrap();
    let o = run(&["validate", path(&file)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_document_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("junk.json");
    std::fs::write(&file, "{ not json").unwrap();
    assert_eq!(run(&["validate", path(&file)]).status.code(), Some(1));
}

#[test]
fn diff_reports_shared_classes_and_disjointness() {
    let o = run(&["diff", path(&fixture("pipeline-b.json")), path(&fixture("pipeline-c.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("share 4 task classes"));
    let o = run(&["diff", path(&fixture("pipeline-a.json")), path(&fixture("pipeline-d.json"))]);
    assert!(stdout(&o).contains("disjoint"));
}

#[test]
fn submit_remove_round_trip_through_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    for x in ["a", "b", "c", "d"] {
        let o = run(&["submit", "--state", path(&state), path(&fixture(&format!("pipeline-{x}.json")))]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["status", "--state", path(&state)]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0));
    assert!(text.contains("running DAGs: 2"));
    assert!(text.contains("running tasks: 15"));
    assert!(text.contains("all constraints hold"));

    let dup = run(&["submit", "--state", path(&state), path(&fixture("pipeline-a.json"))]);
    assert_eq!(dup.status.code(), Some(2));
    let unknown = run(&["remove", "--state", path(&state), "Z"]);
    assert_eq!(unknown.status.code(), Some(2));

    for n in ["B", "A", "D", "C"] {
        assert_eq!(run(&["remove", "--state", path(&state), n]).status.code(), Some(0));
    }
    let text = stdout(&run(&["status", "--state", path(&state)]));
    assert!(text.contains("running tasks: 0"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["submit"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn generate_and_replay_small_workload() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let t = dir.path().join("t.json");
    let o = run(&["gen-workload", "--preset", "small", "--seed", "3", "--out", path(&w)]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&[
        "gen-trace", "--workload", path(&w), "--kind", "rw", "--seed", "1", "--rw-steps", "20", "--out", path(&t),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["replay", "--workload", path(&w), "--trace", path(&t), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,mode,running_tasks,cost,fragments,paused"));
    assert!(metrics.lines().any(|l| l.contains(",reuse,")));
    let hist = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bucket_low,bucket_high,time_fraction"));
}
