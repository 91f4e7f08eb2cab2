use std::fs;
use std::process::{Command, Output};

fn bakery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bakery"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn clean_exploration_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = bakery(&[
        "explore",
        "--n",
        "2",
        "--m",
        "2",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"]["status"], "clean");
    assert_eq!(v["states_visited"], 570);
    assert!(!out.exists());
}

#[test]
fn text_report_leads_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = bakery(&[
        "explore",
        "--n",
        "1",
        "--m",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# bakery-report/1 config="), "{text}");
}

#[test]
fn violation_exits_one_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cex.jsonl");
    let o = bakery(&[
        "explore",
        "--algo",
        "bakery",
        "--n",
        "2",
        "--m",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let o = bakery(&["replay", "--trace", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn edited_trace_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cex.jsonl");
    bakery(&[
        "scenario-overflow",
        "--m",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let edited = text.replacen("\"choice\":\"enter\"", "\"choice\":\"read(1)=9\"", 1);
    assert_ne!(edited, text);
    fs::write(&out, edited).unwrap();
    let o = bakery(&["replay", "--trace", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "not json\n").unwrap();
    assert_eq!(
        code(&bakery(&["replay", "--trace", bad.to_str().unwrap()])),
        2
    );
    assert_eq!(
        code(&bakery(&["replay", "--trace", "/nonexistent/trace.jsonl"])),
        2
    );
    assert_eq!(code(&bakery(&["explore", "--n", "0"])), 2);
    assert_eq!(code(&bakery(&["explore", "--m", "0"])), 2);
    assert_eq!(code(&bakery(&["walk", "--walks", "0"])), 2);
    assert_eq!(code(&bakery(&["frobnicate"])), 2);
}

#[test]
fn livelock_scenario_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.jsonl");
    let o = bakery(&[
        "scenario-livelock",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["slow_trips"], 3);
    assert_eq!(
        code(&bakery(&["replay", "--trace", out.to_str().unwrap()])),
        0
    );
}

#[test]
fn stress_passes() {
    let o = bakery(&[
        "stress",
        "--threads",
        "3",
        "--iters",
        "500",
        "--m",
        "3",
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mutex_violations"], 0);
    assert_eq!(v["cells"], 6);
}
