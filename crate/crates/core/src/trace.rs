//! Event trace: one JSON object per line, hashed while written, and a
//! replayer that rebuilds the period metrics from the events alone.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::Role;
use crate::env::actions::ActionId;
use crate::fiscal::{DispositionMode, TaxRate};
use crate::governance::{GoverningConfig, Ranking};
use crate::market::{Fill, Order};
use crate::metrics::{ActivityCounts, MetricsRecord, PeriodClose, SwfKind};
use crate::units::{AgentId, Coins, HouseColor, Labor, Multiplier, Pos, Resource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Env,
    Planner,
    Agent(AgentId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentInit {
    pub id: AgentId,
    pub role: Role,
    pub pos: Pos,
    pub multiplier: Multiplier,
    pub gather_skill: f64,
}

/// Labor and coin effects are explicit so the trace can be replayed
/// without the world state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Reset {
        seed: u64,
        n_agents: usize,
        eta: f64,
        reward: SwfKind,
        governing: GoverningConfig,
        disposition: DispositionMode,
        period_length: u64,
        steps: u64,
        agents: Vec<AgentInit>,
    },
    RatesSet {
        period: u32,
        rates: Vec<TaxRate>,
    },
    Vote {
        ranking: Ranking,
    },
    OrderPlaced {
        order: Order,
        labor: Labor,
    },
    ResourceTrade {
        fill: Fill,
    },
    HouseTrade {
        buyer: AgentId,
        seller: AgentId,
        color: HouseColor,
        pos: Pos,
        seller_income: Coins,
        buyer_income: Coins,
        buyer_labor: Labor,
    },
    SkillTrade {
        buyer: AgentId,
        seller: AgentId,
        seller_income: Coins,
        buyer_income: Coins,
        buyer_multiplier: Multiplier,
        buyer_labor: Labor,
    },
    Build {
        pos: Pos,
        color: HouseColor,
        income: Coins,
        labor: Labor,
    },
    Move {
        from: Pos,
        to: Pos,
        labor: Labor,
    },
    Gather {
        resource: Resource,
        pos: Pos,
        amount: u32,
        labor: Labor,
    },
    /// A legal action lost a same-step race.
    Contested,
    /// An action failed its preconditions (only when masks are bypassed).
    Rejected {
        reason: String,
    },
    OrderExpired {
        order: Order,
    },
    OrderCancelled {
        order: Order,
    },
    Regen {
        cells: Vec<Pos>,
    },
    TaxCollected {
        period: u32,
        income: Vec<Coins>,
        tax: Vec<Coins>,
        revenue: Coins,
    },
    Redistributed {
        period: u32,
        shares: Vec<Coins>,
    },
    Invested {
        period: u32,
        eligible: Vec<AgentId>,
        ranking: Option<Ranking>,
        allocation: [Coins; 3],
        regen: [f64; 3],
    },
    PeriodClosed {
        period: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: u32,
    pub step: u64,
    pub actor: Actor,
    pub action: Option<ActionId>,
    pub event: Event,
}

/// JSON-lines writer that keeps a running SHA-256 of everything written.
pub struct TraceWriter<W: Write> {
    out: W,
    hasher: Sha256,
    lines: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter {
            out,
            hasher: Sha256::new(),
            lines: 0,
        }
    }

    pub fn write(&mut self, record: &TraceRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.hasher.update(&line);
        self.lines += 1;
        self.out.write_all(&line)
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    /// Flushes and returns the hex digest and the inner writer.
    pub fn finish(mut self) -> io::Result<(String, W)> {
        self.out.flush()?;
        Ok((hex::encode(self.hasher.finalize()), self.out))
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Error)]
#[error("trace line {line}: {message}")]
pub struct ReplayError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Replay {
    pub n_agents: usize,
    pub records: Vec<MetricsRecord>,
}

struct EpisodeState {
    episode: u32,
    eta: f64,
    reward: SwfKind,
    disposition: DispositionMode,
    coins: Vec<Coins>,
    labor: Vec<Labor>,
    counts: ActivityCounts,
    income: Vec<Coins>,
    tax: Vec<Coins>,
    revenue: Coins,
    allocation: [Coins; 3],
}

impl EpisodeState {
    fn agent(&mut self, id: AgentId) -> Result<usize, String> {
        if id < self.coins.len() {
            Ok(id)
        } else {
            Err(format!("unknown agent {id}"))
        }
    }

    fn apply(&mut self, record: &TraceRecord) -> Result<Option<MetricsRecord>, String> {
        let actor = match record.actor {
            Actor::Agent(id) => Some(self.agent(id)?),
            _ => None,
        };
        let actor_id = || actor.ok_or_else(|| "event requires an agent actor".to_string());
        match &record.event {
            Event::Reset { .. } => unreachable!("handled by caller"),
            Event::OrderPlaced { labor, .. } => self.labor[actor_id()?] += *labor,
            Event::ResourceTrade { fill } => {
                let (b, s) = (self.agent(fill.buyer)?, self.agent(fill.seller)?);
                let price = Coins::from_price(fill.price);
                self.coins[b] -= price;
                self.coins[s] += price;
                self.counts.resource_trades += 1;
            }
            Event::HouseTrade {
                buyer,
                seller,
                seller_income,
                buyer_income,
                buyer_labor,
                ..
            } => {
                let (b, s) = (self.agent(*buyer)?, self.agent(*seller)?);
                self.coins[s] += *seller_income;
                self.coins[b] += *buyer_income;
                self.labor[b] += *buyer_labor;
                self.counts.house_trades += 1;
            }
            Event::SkillTrade {
                buyer,
                seller,
                seller_income,
                buyer_income,
                buyer_labor,
                ..
            } => {
                let (b, s) = (self.agent(*buyer)?, self.agent(*seller)?);
                self.coins[s] += *seller_income;
                self.coins[b] += *buyer_income;
                self.labor[b] += *buyer_labor;
                self.counts.skill_trades += 1;
            }
            Event::Build { income, labor, .. } => {
                let a = actor_id()?;
                self.coins[a] += *income;
                self.labor[a] += *labor;
                self.counts.builds += 1;
            }
            Event::Move { labor, .. } | Event::Gather { labor, .. } => self.labor[actor_id()?] += *labor,
            Event::TaxCollected {
                income, tax, revenue, ..
            } => {
                if tax.len() != self.coins.len() || income.len() != self.coins.len() {
                    return Err("tax vector length mismatch".into());
                }
                for (c, t) in self.coins.iter_mut().zip(tax) {
                    *c -= *t;
                }
                self.income = income.clone();
                self.tax = tax.clone();
                self.revenue = *revenue;
                self.allocation = [Coins::ZERO; 3];
            }
            Event::Redistributed { shares, .. } => {
                if shares.len() != self.coins.len() {
                    return Err("share vector length mismatch".into());
                }
                for (c, s) in self.coins.iter_mut().zip(shares) {
                    *c += *s;
                }
            }
            Event::Invested { allocation, .. } => self.allocation = *allocation,
            Event::PeriodClosed { period } => {
                let record = MetricsRecord::compute(PeriodClose {
                    episode: self.episode,
                    period: *period,
                    step: record.step,
                    coins: &self.coins,
                    labor: &self.labor,
                    eta: self.eta,
                    reward: self.reward,
                    counts: self.counts,
                    income: &self.income,
                    tax: &self.tax,
                    revenue: self.revenue,
                    disposition: self.disposition,
                    allocation: self.allocation,
                })
                .map_err(|e| e.to_string())?;
                return Ok(Some(record));
            }
            Event::RatesSet { .. }
            | Event::Vote { .. }
            | Event::Contested
            | Event::Rejected { .. }
            | Event::OrderExpired { .. }
            | Event::OrderCancelled { .. }
            | Event::Regen { .. } => {}
        }
        Ok(None)
    }
}

/// Rebuilds every period's metrics from a JSON-lines trace.
pub fn replay_trace<R: BufRead>(reader: R) -> Result<Replay, ReplayError> {
    let mut replay = Replay::default();
    let mut state: Option<EpisodeState> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ReplayError { line: line_no, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if let Event::Reset {
            n_agents,
            eta,
            reward,
            disposition,
            ..
        } = &record.event
        {
            if replay.n_agents != 0 && replay.n_agents != *n_agents {
                return Err(err("agent count changed between episodes".into()));
            }
            replay.n_agents = *n_agents;
            state = Some(EpisodeState {
                episode: record.episode,
                eta: *eta,
                reward: *reward,
                disposition: *disposition,
                coins: vec![Coins::ZERO; *n_agents],
                labor: vec![Labor::ZERO; *n_agents],
                counts: ActivityCounts::default(),
                income: Vec::new(),
                tax: Vec::new(),
                revenue: Coins::ZERO,
                allocation: [Coins::ZERO; 3],
            });
            continue;
        }
        let st = state.as_mut().ok_or_else(|| err("event before reset".into()))?;
        if record.episode != st.episode {
            return Err(err(format!("episode {} without reset", record.episode)));
        }
        if let Some(m) = st.apply(&record).map_err(err)? {
            replay.records.push(m);
        }
    }
    Ok(replay)
}
