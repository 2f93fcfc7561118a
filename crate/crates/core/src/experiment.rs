//! Episode runner, output files and grid execution.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::env::{Env, EnvError};
use crate::governance::{GoverningConfig, Ranking};
use crate::metrics::{metrics_csv, pearson_correlation, ActivityCounts, Correlation, MetricsRecord, Ratio};
use crate::policy::{AgentPolicyKind, PlannerPolicyKind, PolicySet};
use crate::rng::mix_seed;
use crate::trace::{replay_trace, ReplayError, TraceRecord, TraceWriter};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent_policy: AgentPolicyKind,
    pub planner_policy: PlannerPolicyKind,
    /// Ranking the planner submits under the full-utilitarian system.
    pub planner_vote: Ranking,
    pub seed: u64,
    pub episodes: u32,
    /// Check environment invariants after every step.
    pub verify: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            agent_policy: AgentPolicyKind::Heuristic,
            planner_policy: PlannerPolicyKind::FreeMarket,
            planner_vote: Ranking::DEFAULT,
            seed: 0,
            episodes: 1,
            verify: true,
        }
    }
}

impl RunConfig {
    pub fn label(&self) -> String {
        self.env.governing.label()
    }

    /// One configuration per governing combination of the experiment grid.
    pub fn grid(&self) -> Vec<RunConfig> {
        GoverningConfig::grid()
            .into_iter()
            .map(|governing| {
                let mut c = self.clone();
                c.env.governing = governing;
                c
            })
            .collect()
    }
}

pub fn episode_seed(run_seed: u64, episode: u32) -> u64 {
    mix_seed(run_seed, episode as u64)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invariant violated in episode {episode} at step {step}: {message}")]
    Invariant { episode: u32, step: u64, message: String },
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs one episode, handing every trace record to `sink` in order.
pub fn run_episode(
    config: &RunConfig,
    episode: u32,
    sink: &mut dyn FnMut(&TraceRecord) -> Result<(), RunError>,
) -> Result<Vec<MetricsRecord>, RunError> {
    let seed = episode_seed(config.seed, episode);
    let mut env = Env::with_episode(config.env.clone(), seed, episode)?;
    let mut policies = PolicySet::new(config.agent_policy, config.planner_policy, config.planner_vote, &env);
    for r in env.drain_events() {
        sink(&r)?;
    }
    let mut obs = env.observations();
    while !env.done() {
        let (agents, planner) = policies.act(&env, &obs);
        let out = env.step(&agents, &planner)?;
        for r in &out.events {
            sink(r)?;
        }
        if config.verify {
            env.check_invariants().map_err(|message| RunError::Invariant {
                episode,
                step: env.current_step() - 1,
                message,
            })?;
        }
        obs = out.observations;
    }
    Ok(env.records().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric: String,
    pub activity: String,
    pub correlation: Correlation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub periods: usize,
    pub counts: ActivityCounts,
    pub build_house_ratio: Ratio,
    pub build_skill_ratio: Ratio,
    pub equality: f64,
    pub productivity: f64,
    pub maximin: f64,
    pub swf: f64,
    pub correlations: Vec<CorrelationEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub governing: GoverningConfig,
    pub agent_policy: AgentPolicyKind,
    pub planner_policy: PlannerPolicyKind,
    pub seed: u64,
    pub trace_digest: String,
    pub trace_lines: u64,
    pub episodes: Vec<EpisodeSummary>,
}

type Column = (&'static str, fn(&MetricsRecord) -> f64);

/// Per-episode end-of-run values and, across that episode's periods, the
/// Pearson correlation of each welfare metric with cumulative activity.
pub fn summarize_episodes(records: &[MetricsRecord]) -> Vec<EpisodeSummary> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let episode = records[start].episode;
        let end = start + records[start..].iter().take_while(|r| r.episode == episode).count();
        let group = &records[start..end];
        let last = group.last().expect("non-empty group");
        let metrics: [Column; 3] = [
            ("productivity", |r| r.productivity),
            ("equality", |r| r.equality),
            ("maximin", |r| r.maximin),
        ];
        let activities: [Column; 3] = [
            ("builds", |r| r.counts.builds as f64),
            ("house_trades", |r| r.counts.house_trades as f64),
            ("skill_trades", |r| r.counts.skill_trades as f64),
        ];
        let mut correlations = Vec::new();
        for (m, mf) in metrics {
            let y: Vec<f64> = group.iter().map(mf).collect();
            for (a, af) in activities {
                let x: Vec<f64> = group.iter().map(af).collect();
                correlations.push(CorrelationEntry {
                    metric: m.to_string(),
                    activity: a.to_string(),
                    correlation: pearson_correlation(&x, &y),
                });
            }
        }
        out.push(EpisodeSummary {
            episode,
            periods: group.len(),
            counts: last.counts,
            build_house_ratio: last.build_house_ratio,
            build_skill_ratio: last.build_skill_ratio,
            equality: last.equality,
            productivity: last.productivity,
            maximin: last.maximin,
            swf: last.swf,
            correlations,
        });
        start = end;
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<MetricsRecord>,
    pub trace_path: PathBuf,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub elapsed: Duration,
}

pub fn output_paths(out_dir: &Path, label: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        out_dir.join(format!("{label}.trace.jsonl")),
        out_dir.join(format!("{label}.metrics.csv")),
        out_dir.join(format!("{label}.summary.json")),
    )
}

/// Runs every episode and writes `<label>.trace.jsonl`,
/// `<label>.metrics.csv` and `<label>.summary.json` into `out_dir`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let label = config.label();
    let (trace_path, metrics_path, summary_path) = output_paths(out_dir, &label);

    let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
    let mut writer = TraceWriter::new(BufWriter::new(file));
    let mut records = Vec::new();
    for episode in 0..config.episodes {
        let mut sink = |r: &TraceRecord| writer.write(r).map_err(io_err(&trace_path));
        records.extend(run_episode(config, episode, &mut sink)?);
    }
    let trace_lines = writer.lines();
    let (trace_digest, _) = writer.finish().map_err(io_err(&trace_path))?;

    let n = config.env.n_agents();
    std::fs::write(&metrics_path, metrics_csv(n, &records)).map_err(io_err(&metrics_path))?;

    let summary = RunSummary {
        label,
        governing: config.env.governing,
        agent_policy: config.agent_policy,
        planner_policy: config.planner_policy,
        seed: config.seed,
        trace_digest,
        trace_lines,
        episodes: summarize_episodes(&records),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Other(e.to_string()))?;
    std::fs::write(&summary_path, json + "\n").map_err(io_err(&summary_path))?;

    Ok(RunOutput {
        summary,
        records,
        trace_path,
        metrics_path,
        summary_path,
        elapsed: started.elapsed(),
    })
}

/// Runs all ten governing configurations in parallel, one thread each.
pub fn run_grid(base: &RunConfig, out_dir: &Path) -> Vec<Result<RunOutput, RunError>> {
    let configs = base.grid();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || run_experiment(c, out_dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(RunError::Other("run thread panicked".into()))))
            .collect()
    })
}

/// Rebuilds the metrics table from a trace file.
pub fn replay_metrics(trace_path: &Path) -> Result<(String, Vec<MetricsRecord>), RunError> {
    let file = File::open(trace_path).map_err(io_err(trace_path))?;
    let replay = replay_trace(BufReader::new(file))?;
    Ok((metrics_csv(replay.n_agents, &replay.records), replay.records))
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), RunError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}
