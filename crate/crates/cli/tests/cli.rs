use std::path::Path;
use std::process::{Command, Output};

fn gtb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtb"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .expect("spawn gtb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_replay_matches_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = gtb(&["--steps", "200", "--planner-policy", "progressive-us", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("semi-inclusive-eq-times-prod episode 0"));
    let out = dir.path().join("out");
    for ext in ["trace.jsonl", "metrics.csv", "summary.json"] {
        assert!(out.join(format!("semi-inclusive-eq-times-prod.{ext}")).exists(), "{ext}");
    }
    let o = gtb(
        &[
            "--replay",
            "out/semi-inclusive-eq-times-prod.trace.jsonl",
            "--replay-out",
            "replayed.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let replayed = std::fs::read_to_string(dir.path().join("replayed.csv")).unwrap();
    let written = std::fs::read_to_string(out.join("semi-inclusive-eq-times-prod.metrics.csv")).unwrap();
    assert_eq!(replayed, written);
}

#[test]
fn grid_writes_every_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let o = gtb(&["--grid", "--steps", "100", "--out", "grid"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summaries = std::fs::read_dir(dir.path().join("grid"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".summary.json"))
        .count();
    assert_eq!(summaries, 10);
}

#[test]
fn environment_variables_configure_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gtb"))
        .current_dir(dir.path())
        .env_clear()
        .env("GTB_STEPS", "100")
        .env("GTB_SYSTEM", "full-utilitarian")
        .env("GTB_OUT", "envrun")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = dir.path().join("envrun/full-utilitarian-eq-times-prod.summary.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(v["episodes"][0]["periods"], 1);
}

#[test]
fn flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gtb"))
        .args(["--steps", "100", "--out", "flag"])
        .current_dir(dir.path())
        .env_clear()
        .env("GTB_STEPS", "not-a-number")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = gtb(&["--system", "anarchy"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = gtb(&["--steps", "150", "--out", "bad"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    let o = gtb(&["--replay", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_is_the_base() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = serde_json::json!({ "seed": 3, "episodes": 2 });
    config["env"] = serde_json::json!({ "steps_per_episode": 100 });
    std::fs::write(dir.path().join("run.json"), config.to_string()).unwrap();
    let o = gtb(&["--config", "run.json", "--out", "cfg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("episode 1"));
}
