use std::io::Cursor;

use gtb_core::experiment::{replay_metrics, run_experiment, RunConfig};
use gtb_core::fiscal::DispositionMode;
use gtb_core::metrics::metrics_csv;
use gtb_core::policy::PlannerPolicyKind;
use gtb_core::trace::{digest_bytes, replay_trace, TraceRecord};

fn config(disposition: DispositionMode) -> RunConfig {
    let mut c = RunConfig {
        planner_policy: PlannerPolicyKind::ProgressiveUs,
        episodes: 2,
        seed: 17,
        ..RunConfig::default()
    };
    c.env.steps_per_episode = 300;
    c.env.disposition = disposition;
    c
}

#[test]
fn replay_rebuilds_metrics_exactly() {
    for mode in [DispositionMode::Invest, DispositionMode::Redistribute] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&config(mode), dir.path()).unwrap();
        assert_eq!(out.records.len(), 6);
        let (csv, records) = replay_metrics(&out.trace_path).unwrap();
        assert_eq!(records, out.records);
        assert_eq!(csv, std::fs::read_to_string(&out.metrics_path).unwrap());
    }
}

#[test]
fn summary_digest_covers_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(DispositionMode::Invest), dir.path()).unwrap();
    let bytes = std::fs::read(&out.trace_path).unwrap();
    assert_eq!(out.summary.trace_digest, digest_bytes(&bytes));
    assert_eq!(out.summary.trace_lines as usize, bytes.iter().filter(|&&b| b == b'\n').count());
}

#[test]
fn trace_lines_are_tagged_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(DispositionMode::Invest), dir.path()).unwrap();
    let text = std::fs::read_to_string(&out.trace_path).unwrap();
    let mut types = std::collections::BTreeSet::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["episode", "step", "actor", "event"] {
            assert!(v.get(key).is_some(), "missing {key}: {line}");
        }
        types.insert(v["event"]["type"].as_str().unwrap().to_string());
        let _: TraceRecord = serde_json::from_value(v).unwrap();
    }
    for t in ["reset", "rates_set", "tax_collected", "invested", "period_closed", "build", "move"] {
        assert!(types.contains(t), "no {t} events in {types:?}");
    }
    assert!(text.starts_with("{\"episode\":0,\"step\":0,\"actor\":\"env\""));
}

#[test]
fn replay_reports_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(DispositionMode::Invest), dir.path()).unwrap();
    let text = std::fs::read_to_string(&out.trace_path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{not json";
    let err = replay_trace(Cursor::new(lines.join("\n"))).unwrap_err();
    assert_eq!(err.line, 5);

    let headless = text.lines().skip(1).collect::<Vec<_>>().join("\n");
    let err = replay_trace(Cursor::new(headless)).unwrap_err();
    assert_eq!(err.line, 1);
}

#[test]
fn empty_trace_replays_to_an_empty_table() {
    let replay = replay_trace(Cursor::new("")).unwrap();
    assert!(replay.records.is_empty());
    assert_eq!(metrics_csv(0, &replay.records).lines().count(), 1);
}
