use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use gtb_core::experiment::{replay_metrics, run_experiment, run_grid, write_text, RunConfig, RunOutput};
use gtb_core::fiscal::DispositionMode;
use gtb_core::governance::{GoverningSystem, Institution, Ranking};
use gtb_core::income::Jitter;
use gtb_core::metrics::SwfKind;
use gtb_core::policy::{AgentPolicyKind, PlannerPolicyKind};
use gtb_core::units::{Coins, Labor, Multiplier};

/// Run Gather-Trade-Build economy experiments and replay their traces.
///
/// Every option can also be set through the environment variable shown next
/// to it; command-line flags take precedence. Output files are written as
/// <label>.trace.jsonl, <label>.metrics.csv and <label>.summary.json.
#[derive(Debug, Parser)]
#[command(name = "gtb", version)]
struct Cli {
    /// JSON run configuration used as the base before flags are applied.
    #[arg(long, env = "GTB_CONFIG")]
    config: Option<PathBuf>,

    /// full-libertarian, semi-libertarian-utilitarian or full-utilitarian.
    #[arg(long, env = "GTB_SYSTEM")]
    system: Option<GoverningSystem>,
    /// inclusive, arbitrary or extractive (semi-libertarian only).
    #[arg(long, env = "GTB_INSTITUTION")]
    institution: Option<Institution>,
    /// Planner reward: eq-times-prod or inverse-income-weighted.
    #[arg(long, env = "GTB_REWARD")]
    reward: Option<SwfKind>,
    /// free-market, flat10, progressive-us, random or noop.
    #[arg(long, env = "GTB_PLANNER_POLICY")]
    planner_policy: Option<PlannerPolicyKind>,
    /// heuristic, random or noop.
    #[arg(long, env = "GTB_AGENT_POLICY")]
    agent_policy: Option<AgentPolicyKind>,
    /// Planner rank vote under full-utilitarian, e.g. iron>stone>wood.
    #[arg(long, env = "GTB_PLANNER_VOTE")]
    planner_vote: Option<Ranking>,
    /// redistribute or invest.
    #[arg(long, env = "GTB_DISPOSITION")]
    disposition: Option<DispositionMode>,

    #[arg(long, env = "GTB_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "GTB_EPISODES")]
    episodes: Option<u32>,
    /// Steps per episode (a multiple of the period length).
    #[arg(long, env = "GTB_STEPS")]
    steps: Option<u64>,
    /// Steps per tax period.
    #[arg(long, env = "GTB_PERIOD")]
    period: Option<u64>,

    #[arg(long, env = "GTB_HEIGHT")]
    height: Option<usize>,
    #[arg(long, env = "GTB_WIDTH")]
    width: Option<usize>,
    #[arg(long, env = "GTB_EXPERTS")]
    experts: Option<usize>,
    #[arg(long, env = "GTB_NOVICES")]
    novices: Option<usize>,
    /// Source density per resource as a fraction of cells.
    #[arg(long, env = "GTB_SOURCE_DENSITY")]
    source_density: Option<f64>,
    /// Base per-step regeneration probability for every resource.
    #[arg(long, env = "GTB_BASE_REGEN")]
    base_regen: Option<f64>,

    /// Minimum multiplier needed to build.
    #[arg(long, env = "GTB_SKILL_THRESHOLD")]
    skill_threshold: Option<f64>,
    /// Multiplier gained per skill trade.
    #[arg(long, env = "GTB_SKILL_DELTA")]
    skill_delta: Option<f64>,
    #[arg(long, env = "GTB_PAY_BASE")]
    pay_base: Option<f64>,
    /// Utility curvature.
    #[arg(long, env = "GTB_ETA")]
    eta: Option<f64>,
    #[arg(long, env = "GTB_JITTER_LOW")]
    jitter_low: Option<f64>,
    #[arg(long, env = "GTB_JITTER_HIGH")]
    jitter_high: Option<f64>,
    #[arg(long, env = "GTB_GATHER_SKILL_MAX")]
    gather_skill_max: Option<f64>,

    #[arg(long, env = "GTB_LABOR_MOVE")]
    labor_move: Option<f64>,
    #[arg(long, env = "GTB_LABOR_GATHER")]
    labor_gather: Option<f64>,
    #[arg(long, env = "GTB_LABOR_TRADE")]
    labor_trade: Option<f64>,
    #[arg(long, env = "GTB_LABOR_BUILD")]
    labor_build: Option<f64>,
    #[arg(long, env = "GTB_LABOR_HOUSE_TRADE")]
    labor_house_trade: Option<f64>,
    #[arg(long, env = "GTB_LABOR_SKILL_TRADE")]
    labor_skill_trade: Option<f64>,

    #[arg(long, env = "GTB_MAX_OPEN_ORDERS")]
    max_open_orders: Option<usize>,
    #[arg(long, env = "GTB_ORDER_TTL")]
    order_ttl: Option<u64>,
    /// Multiplier applied to the default bracket cutoffs.
    #[arg(long, env = "GTB_CUTOFF_SCALE")]
    cutoff_scale: Option<f64>,
    /// Regeneration boost per coin_scale coins invested.
    #[arg(long, env = "GTB_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, env = "GTB_COIN_SCALE")]
    coin_scale: Option<f64>,
    #[arg(long, env = "GTB_REGEN_MAX")]
    regen_max: Option<f64>,

    /// Output directory.
    #[arg(long, env = "GTB_OUT", default_value = "runs")]
    out: PathBuf,
    /// Run all ten governing configurations in parallel.
    #[arg(long, conflicts_with = "replay")]
    grid: bool,
    /// Rebuild the metrics table from a trace and print it (or write it to --replay-out).
    #[arg(long, value_name = "TRACE")]
    replay: Option<PathBuf>,
    #[arg(long, requires = "replay")]
    replay_out: Option<PathBuf>,
    /// Skip the per-step invariant checks.
    #[arg(long, env = "GTB_NO_VERIFY")]
    no_verify: bool,
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
    ($target:expr, $value:expr, $conv:expr) => {
        if let Some(v) = $value {
            $target = $conv(v);
        }
    };
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        let e = &mut c.env;
        set!(e.governing.system, self.system);
        set!(e.governing.institution, self.institution);
        set!(e.governing.reward, self.reward);
        set!(e.disposition, self.disposition);
        set!(c.agent_policy, self.agent_policy);
        set!(c.planner_policy, self.planner_policy);
        set!(c.planner_vote, self.planner_vote);
        set!(c.seed, self.seed);
        set!(c.episodes, self.episodes);
        set!(e.steps_per_episode, self.steps);
        set!(e.period_length, self.period);
        set!(e.world.height, self.height);
        set!(e.world.width, self.width);
        set!(e.n_experts, self.experts);
        set!(e.n_novices, self.novices);
        set!(e.world.source_density, self.source_density, |v| [v; 3]);
        set!(e.world.base_regen, self.base_regen, |v| [v; 3]);
        let econ = &mut e.economy;
        set!(econ.skill_threshold, self.skill_threshold, Multiplier::from_f64);
        set!(econ.skill_delta, self.skill_delta, Multiplier::from_f64);
        set!(econ.pay_base, self.pay_base, Coins::from_f64);
        set!(econ.eta, self.eta);
        set!(econ.gather_skill_max, self.gather_skill_max);
        econ.jitter = Jitter {
            low: self.jitter_low.unwrap_or(econ.jitter.low),
            high: self.jitter_high.unwrap_or(econ.jitter.high),
        };
        let labor = &mut econ.labor;
        set!(labor.movement, self.labor_move, Labor::from_f64);
        set!(labor.gather, self.labor_gather, Labor::from_f64);
        set!(labor.resource_trade, self.labor_trade, Labor::from_f64);
        set!(labor.build, self.labor_build, Labor::from_f64);
        set!(labor.house_trade, self.labor_house_trade, Labor::from_f64);
        set!(labor.skill_trade, self.labor_skill_trade, Labor::from_f64);
        set!(e.market.max_open_orders, self.max_open_orders);
        set!(e.market.order_ttl, self.order_ttl);
        set!(e.cutoff_scale, self.cutoff_scale);
        set!(e.investment.alpha, self.alpha);
        set!(e.investment.coin_scale, self.coin_scale);
        set!(e.investment.regen_max, self.regen_max);
        if self.no_verify {
            c.verify = false;
        }
        c.env.validate()?;
        Ok(c)
    }
}

fn report(out: &RunOutput) {
    for e in &out.summary.episodes {
        println!(
            "{} episode {}: builds {} house-trades {} skill-trades {} resource-trades {} equality {:.4} productivity {:.2} ({:.2?})",
            out.summary.label,
            e.episode,
            e.counts.builds,
            e.counts.house_trades,
            e.counts.skill_trades,
            e.counts.resource_trades,
            e.equality,
            e.productivity,
            out.elapsed,
        );
    }
    println!("  trace   {} ({})", out.trace_path.display(), out.summary.trace_digest);
    println!("  metrics {}", out.metrics_path.display());
    println!("  summary {}", out.summary_path.display());
}

fn run(cli: Cli) -> Result<()> {
    if let Some(trace) = &cli.replay {
        let (csv, _) = replay_metrics(trace)?;
        write_text(cli.replay_out.as_deref(), &csv)?;
        return Ok(());
    }
    let config = cli.run_config()?;
    if cli.grid {
        let mut failed = 0;
        for result in run_grid(&config, &cli.out) {
            match result {
                Ok(out) => report(&out),
                Err(e) => {
                    eprintln!("error: {e}");
                    failed += 1;
                }
            }
        }
        if failed > 0 {
            bail!("{failed} grid run(s) failed");
        }
    } else {
        report(&run_experiment(&config, &cli.out)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
