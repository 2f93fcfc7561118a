//! The multi-agent environment: reset, masked flat actions, a fixed
//! per-step phase order, period-end fiscal and governance settlement.

pub mod actions;
pub mod observation;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentState, Role};
use crate::config::EnvConfig;
use crate::error::ConfigError;
use crate::fiscal::{begin_period, collect_taxes, dispose_revenue, BracketSetting, Disposition, PeriodLedger, TaxRate, TaxSchedule, NUM_BRACKETS};
use crate::governance::{allocate_revenue, filter_voters, invested_regen, GoverningSystem, Ranking, VoteRegistry, Voter};
use crate::market::{execute_house_trade, execute_skill_trade, skill_trade_available, Market, Side, TradeEvent, TradeTerms};
use crate::metrics::{agent_utility, dequantize, quantize, swf, ActivityCounts, MetricsRecord, PeriodClose};
use crate::rng::{substream, SimRng, Stream};
use crate::trace::{Actor, AgentInit, Event, TraceRecord};
use crate::units::{AgentId, Coins, Direction, Multiplier, Resource};
use crate::world::{apply_move, init_world, place_house, BuildTerms, Cell, MoveOutcome, WorldGrid};

pub use actions::{ActionId, AgentAction, PlannerAction, AGENT_ACTIONS, AGENT_NOOP, PLANNER_ACTIONS, PLANNER_NOOP};
pub use observation::{Field, ObservationLayout, LAYOUT_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("episode finished; reset before stepping")]
    EpisodeDone,
    #[error("expected {expected} agent actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("action {action} is not legal for {actor:?}")]
    IllegalAction { actor: Actor, action: ActionId },
    #[error("planner sets bracket {0} more than once")]
    DuplicateBracket(usize),
    #[error("planner votes more than once")]
    DuplicateVote,
    #[error("agent {0} does not exist")]
    UnknownAgent(AgentId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub agents: Vec<Vec<f64>>,
    pub planner: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observations: Observations,
    /// Quantized utility differences; see [`crate::metrics::VALUE_SCALE`].
    pub agent_rewards: Vec<i64>,
    pub planner_reward: i64,
    pub done: bool,
    pub events: Vec<TraceRecord>,
    pub period_record: Option<MetricsRecord>,
}

impl StepOutcome {
    pub fn agent_reward(&self, agent: AgentId) -> f64 {
        dequantize(self.agent_rewards[agent])
    }

    pub fn planner_reward_f64(&self) -> f64 {
        dequantize(self.planner_reward)
    }
}

/// Settlement of one closed tax period.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedPeriod {
    pub ledger: PeriodLedger,
    pub coins_before_collection: Coins,
    pub coins_after_disposition: Coins,
    pub spent: Coins,
    pub allocation: [Coins; 3],
    pub eligible: Vec<AgentId>,
    pub ranking: Option<Ranking>,
    pub regen: [f64; 3],
}

#[derive(Clone, Debug)]
struct PreviousPeriod {
    income: Vec<Coins>,
    marginal: Vec<TaxRate>,
}

#[derive(Clone, Debug)]
struct Rngs {
    regen: SimRng,
    market: SimRng,
    income: SimRng,
    gather: SimRng,
    order: SimRng,
}

impl Rngs {
    fn new(seed: u64) -> Self {
        Rngs {
            regen: substream(seed, Stream::Regen, 0),
            market: substream(seed, Stream::Market, 0),
            income: substream(seed, Stream::Income, 0),
            gather: substream(seed, Stream::Gather, 0),
            order: substream(seed, Stream::Order, 0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    seed: u64,
    episode: u32,
    step: u64,
    grid: WorldGrid,
    agents: Vec<AgentState>,
    initial_multipliers: Vec<Multiplier>,
    market: Market,
    schedule: TaxSchedule,
    ledger: PeriodLedger,
    registry: VoteRegistry,
    rngs: Rngs,
    counts: ActivityCounts,
    gathered: [u64; 3],
    utility_q: Vec<i64>,
    swf_q: i64,
    initial_utility_q: Vec<i64>,
    initial_swf_q: i64,
    previous: Option<PreviousPeriod>,
    closed: Vec<ClosedPeriod>,
    records: Vec<MetricsRecord>,
    events: Vec<TraceRecord>,
}

struct PlannerChoice {
    settings: Vec<Option<BracketSetting>>,
    vote: Option<(ActionId, Ranking)>,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        Self::with_episode(config, seed, 0)
    }

    pub fn with_episode(config: EnvConfig, seed: u64, episode: u32) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.n_agents();
        let mut world_rng = substream(seed, Stream::WorldInit, 0);
        let (grid, starts) = init_world(&mut world_rng, &config.world, n)?;

        let mut agent_rng = substream(seed, Stream::Agents, 0);
        let econ = &config.economy;
        let agents: Vec<AgentState> = starts
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                let (role, (lo, hi)) = if i < config.n_experts {
                    (Role::Expert, econ.expert_multiplier)
                } else {
                    (Role::Novice, econ.novice_multiplier)
                };
                let m = Multiplier::from_milli(agent_rng.gen_range(lo.milli()..=hi.milli()));
                let skill = if econ.gather_skill_max > 0.0 {
                    agent_rng.gen_range(0.0..=econ.gather_skill_max)
                } else {
                    0.0
                };
                AgentState::new(i, role, pos, m, skill)
            })
            .collect();

        let schedule = TaxSchedule::standard(config.cutoff_scale)?;
        let ledger = begin_period(0, schedule.clone(), &agents);
        let mut env = Env {
            market: Market::new(config.market),
            registry: VoteRegistry::new(n),
            rngs: Rngs::new(seed),
            initial_multipliers: agents.iter().map(|a| a.multiplier).collect(),
            counts: ActivityCounts::default(),
            gathered: [0; 3],
            utility_q: Vec::new(),
            swf_q: 0,
            initial_utility_q: Vec::new(),
            initial_swf_q: 0,
            previous: None,
            closed: Vec::new(),
            records: Vec::new(),
            events: Vec::new(),
            step: 0,
            config,
            seed,
            episode,
            grid,
            agents,
            schedule,
            ledger,
        };
        let (uq, sq) = env.quantized_welfare();
        env.utility_q = uq.clone();
        env.swf_q = sq;
        env.initial_utility_q = uq;
        env.initial_swf_q = sq;
        let init = Event::Reset {
            seed,
            n_agents: n,
            eta: env.config.economy.eta,
            reward: env.config.governing.reward,
            governing: env.config.governing,
            disposition: env.config.disposition,
            period_length: env.config.period_length,
            steps: env.config.steps_per_episode,
            agents: env
                .agents
                .iter()
                .map(|a| AgentInit {
                    id: a.id,
                    role: a.role,
                    pos: a.pos,
                    multiplier: a.multiplier,
                    gather_skill: a.gather_skill,
                })
                .collect(),
        };
        env.emit(Actor::Env, None, init);
        Ok(env)
    }

    /// Starts the next episode from `seed` with the same configuration.
    pub fn reset(&mut self, seed: u64) -> Result<Observations, EnvError> {
        let episode = self.episode + 1;
        self.reset_episode(seed, episode)
    }

    pub fn reset_episode(&mut self, seed: u64, episode: u32) -> Result<Observations, EnvError> {
        *self = Self::with_episode(self.config.clone(), seed, episode)?;
        Ok(self.observations())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episode(&self) -> u32 {
        self.episode
    }

    /// Index of the next step to run.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn done(&self) -> bool {
        self.step >= self.config.steps_per_episode
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn schedule(&self) -> &TaxSchedule {
        &self.schedule
    }

    pub fn registry(&self) -> &VoteRegistry {
        &self.registry
    }

    pub fn counts(&self) -> ActivityCounts {
        self.counts
    }

    pub fn closed_periods(&self) -> &[ClosedPeriod] {
        &self.closed
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn utility_q(&self) -> &[i64] {
        &self.utility_q
    }

    pub fn initial_utility_q(&self) -> &[i64] {
        &self.initial_utility_q
    }

    pub fn swf_q(&self) -> i64 {
        self.swf_q
    }

    pub fn initial_swf_q(&self) -> i64 {
        self.initial_swf_q
    }

    /// Events emitted since the last drain, including the reset record.
    pub fn drain_events(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.events)
    }

    pub fn period_length(&self) -> u64 {
        self.config.period_length
    }

    pub fn period_progress(&self) -> f64 {
        (self.step % self.config.period_length) as f64 / self.config.period_length as f64
    }

    fn period_starts_now(&self) -> bool {
        self.step.is_multiple_of(self.config.period_length)
    }

    pub fn observations(&self) -> Observations {
        Observations {
            agents: (0..self.agents.len()).map(|i| self.agent_observation(i)).collect(),
            planner: self.planner_observation(),
        }
    }

    fn emit(&mut self, actor: Actor, action: Option<ActionId>, event: Event) {
        self.events.push(TraceRecord {
            episode: self.episode,
            step: self.step,
            actor,
            action,
            event,
        });
    }

    fn quantized_welfare(&self) -> (Vec<i64>, i64) {
        let eta = self.config.economy.eta;
        let coins: Vec<f64> = self.agents.iter().map(|a| a.total_coin().as_f64()).collect();
        let utilities: Vec<f64> = self
            .agents
            .iter()
            .map(|a| agent_utility(a.total_coin().as_f64(), a.labor.as_f64(), eta).expect("eta validated"))
            .collect();
        let swf_value = swf(self.config.governing.reward, &coins, &utilities);
        (utilities.into_iter().map(quantize).collect(), quantize(swf_value))
    }

    fn move_open(&self, agent: AgentId, direction: Direction) -> bool {
        let Some(to) = self.grid.step_from(self.agents[agent].pos, direction) else {
            return false;
        };
        let cell_ok = match self.grid.cell(to) {
            Cell::Water => false,
            Cell::House { owner, .. } => owner == agent,
            Cell::Empty | Cell::Source { .. } => true,
        };
        cell_ok && !self.agents.iter().any(|a| a.id != agent && a.pos == to)
    }

    fn order_open(&self, agent: AgentId, resource: Resource, side: Side, price: u8) -> bool {
        let a = &self.agents[agent];
        let book = self.market.book();
        if book.open_count(agent, resource) >= self.config.market.max_open_orders {
            return false;
        }
        let funded = match side {
            Side::Bid => a.coin >= Coins::from_price(price),
            Side::Ask => a.free_units(resource) > 0,
        };
        funded && !book.would_self_cross(agent, resource, side, price)
    }

    fn build_open(&self, agent: AgentId, color: crate::units::HouseColor) -> bool {
        let a = &self.agents[agent];
        a.multiplier >= self.config.economy.skill_threshold
            && color.components().iter().all(|&r| a.free_units(r) > 0)
            && matches!(self.grid.cell(a.pos), Cell::Empty)
    }

    pub fn agent_action_legal(&self, agent: AgentId, action: AgentAction) -> bool {
        match action {
            AgentAction::Move { direction } => self.move_open(agent, direction),
            AgentAction::Order { resource, side, price } => self.order_open(agent, resource, side, price),
            AgentAction::Build { color } => self.build_open(agent, color),
            AgentAction::BuyHouse { color } => {
                self.agents[agent].is_novice() && self.grid.sellable_house(color).is_some()
            }
            AgentAction::BuySkill => skill_trade_available(&self.agents, agent).is_ok(),
            AgentAction::Vote { .. } | AgentAction::Noop => true,
        }
    }

    /// Legality of every agent action id for the coming step.
    pub fn agent_mask(&self, agent: AgentId) -> Vec<bool> {
        AgentAction::catalog()
            .into_iter()
            .map(|a| self.agent_action_legal(agent, a))
            .collect()
    }

    pub fn planner_action_legal(&self, action: PlannerAction) -> bool {
        match action {
            PlannerAction::SetRate { .. } => self.period_starts_now(),
            PlannerAction::Vote { .. } => self.config.governing.system == GoverningSystem::FullUtilitarian,
            PlannerAction::Noop => true,
        }
    }

    pub fn planner_mask(&self) -> Vec<bool> {
        PlannerAction::catalog()
            .into_iter()
            .map(|a| self.planner_action_legal(a))
            .collect()
    }

    fn parse_planner(&self, ids: &[ActionId], checked: bool) -> Result<PlannerChoice, EnvError> {
        let mut choice = PlannerChoice {
            settings: vec![None; NUM_BRACKETS],
            vote: None,
        };
        for &id in ids {
            let illegal = EnvError::IllegalAction {
                actor: Actor::Planner,
                action: id,
            };
            let action = PlannerAction::from_id(id).ok_or(illegal.clone())?;
            if checked && !self.planner_action_legal(action) {
                return Err(illegal);
            }
            match action {
                PlannerAction::SetRate { bracket, setting } => {
                    if choice.settings[bracket].replace(setting).is_some() {
                        return Err(EnvError::DuplicateBracket(bracket));
                    }
                }
                PlannerAction::Vote { ranking } => {
                    if choice.vote.replace((id, ranking)).is_some() {
                        return Err(EnvError::DuplicateVote);
                    }
                }
                PlannerAction::Noop => {}
            }
        }
        Ok(choice)
    }

    /// Advances one step. Every agent submits one action id; the planner
    /// submits any number of ids, at most one per bracket and one vote.
    pub fn step(&mut self, agent_actions: &[ActionId], planner_actions: &[ActionId]) -> Result<StepOutcome, EnvError> {
        self.step_inner(agent_actions, planner_actions, true)
    }

    /// Runs `action` for `agent` (others idle) on a copy of the environment
    /// without consulting the mask, and reports whether it took effect.
    pub fn probe_agent_action(&self, agent: AgentId, action: ActionId) -> Result<bool, EnvError> {
        if agent >= self.agents.len() {
            return Err(EnvError::UnknownAgent(agent));
        }
        let mut copy = self.clone();
        copy.events.clear();
        let mut ids = vec![AGENT_NOOP; self.agents.len()];
        ids[agent] = action;
        let out = copy.step_inner(&ids, &[], false)?;
        let failed = out.events.iter().any(|e| {
            e.actor == Actor::Agent(agent) && matches!(e.event, Event::Contested | Event::Rejected { .. })
        });
        Ok(!failed)
    }

    /// Same as [`Env::probe_agent_action`] for a single planner action.
    pub fn probe_planner_action(&self, action: ActionId) -> Result<bool, EnvError> {
        let mut copy = self.clone();
        copy.events.clear();
        let out = copy.step_inner(&vec![AGENT_NOOP; self.agents.len()], &[action], false)?;
        Ok(!out
            .events
            .iter()
            .any(|e| e.actor == Actor::Planner && matches!(e.event, Event::Rejected { .. })))
    }

    fn step_inner(&mut self, agent_ids: &[ActionId], planner_ids: &[ActionId], checked: bool) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeDone);
        }
        let n = self.agents.len();
        if agent_ids.len() != n {
            return Err(EnvError::ActionCount {
                expected: n,
                got: agent_ids.len(),
            });
        }
        let mut actions = Vec::with_capacity(n);
        for (i, &id) in agent_ids.iter().enumerate() {
            let illegal = EnvError::IllegalAction {
                actor: Actor::Agent(i),
                action: id,
            };
            let action = AgentAction::from_id(id).ok_or(illegal.clone())?;
            if checked && !self.agent_action_legal(i, action) {
                return Err(illegal);
            }
            actions.push(action);
        }
        let planner = self.parse_planner(planner_ids, checked)?;
        let t = self.step;
        let system = self.config.governing.system;

        // Planner settings take effect only at a period boundary.
        if self.period_starts_now() {
            let period = (t / self.config.period_length) as u32;
            self.schedule.apply_settings(&planner.settings);
            self.ledger = begin_period(period, self.schedule.clone(), &self.agents);
            self.registry.start_period(period);
            let rates = self.schedule.rates().to_vec();
            self.emit(Actor::Planner, None, Event::RatesSet { period, rates });
        } else if planner.settings.iter().any(Option::is_some) {
            self.emit(
                Actor::Planner,
                None,
                Event::Rejected {
                    reason: "rates are set only at period start".into(),
                },
            );
        }
        if let Some((id, ranking)) = planner.vote {
            match self.registry.record(system, Voter::Planner, ranking, t) {
                Ok(()) => self.emit(Actor::Planner, Some(id), Event::Vote { ranking }),
                Err(e) => self.emit(
                    Actor::Planner,
                    Some(id),
                    Event::Rejected {
                        reason: format!("{e:?}"),
                    },
                ),
            }
        }

        for (i, &action) in actions.iter().enumerate() {
            if let AgentAction::Vote { ranking } = action {
                self.registry
                    .record(system, Voter::Agent(i), ranking, t)
                    .expect("agent ids are in range");
                self.agents[i].last_vote = Some(ranking);
                self.emit(Actor::Agent(i), Some(action.id()), Event::Vote { ranking });
            }
        }

        let labor = self.config.economy.labor;
        for (i, &action) in actions.iter().enumerate() {
            if let AgentAction::Order { resource, side, price } = action {
                let placed = self.market.place_order(
                    &mut self.agents,
                    i,
                    resource,
                    side,
                    price,
                    t,
                    labor.resource_trade,
                    &mut self.rngs.market,
                );
                match placed {
                    Ok(p) => {
                        self.emit(
                            Actor::Agent(i),
                            Some(action.id()),
                            Event::OrderPlaced {
                                order: p.order,
                                labor: labor.resource_trade,
                            },
                        );
                        if let Some(fill) = p.fill {
                            self.counts.resource_trades += 1;
                            self.emit(Actor::Agent(i), Some(action.id()), Event::ResourceTrade { fill });
                        }
                    }
                    Err(e) => self.reject(i, action, format!("{e:?}")),
                }
            }
        }

        let econ = &self.config.economy;
        let terms = TradeTerms {
            pay_base: econ.pay_base,
            skill_delta: econ.skill_delta,
            jitter: econ.jitter,
            house_labor: labor.house_trade,
            skill_labor: labor.skill_trade,
        };
        let build_terms = BuildTerms {
            threshold: econ.skill_threshold,
            pay_base: econ.pay_base,
            labor: labor.build,
            jitter: econ.jitter,
        };
        let mut order: Vec<AgentId> = (0..n).collect();
        order.shuffle(&mut self.rngs.order);
        for &i in &order {
            let action = actions[i];
            let result = match action {
                AgentAction::BuyHouse { color } => execute_house_trade(
                    &mut self.grid,
                    &mut self.agents,
                    i,
                    color,
                    &terms,
                    t,
                    &mut self.rngs.income,
                ),
                AgentAction::BuySkill => execute_skill_trade(&mut self.agents, i, &terms, t, &mut self.rngs.income),
                _ => continue,
            };
            match result {
                Ok(TradeEvent::House {
                    buyer,
                    seller,
                    color,
                    pos,
                    seller_income,
                    buyer_income,
                    ..
                }) => {
                    self.counts.house_trades += 1;
                    self.emit(
                        Actor::Agent(i),
                        Some(action.id()),
                        Event::HouseTrade {
                            buyer,
                            seller,
                            color,
                            pos,
                            seller_income,
                            buyer_income,
                            buyer_labor: terms.house_labor,
                        },
                    );
                }
                Ok(TradeEvent::Skill {
                    buyer,
                    seller,
                    seller_income,
                    buyer_income,
                    buyer_multiplier,
                    ..
                }) => {
                    self.counts.skill_trades += 1;
                    self.emit(
                        Actor::Agent(i),
                        Some(action.id()),
                        Event::SkillTrade {
                            buyer,
                            seller,
                            seller_income,
                            buyer_income,
                            buyer_multiplier,
                            buyer_labor: terms.skill_labor,
                        },
                    );
                }
                Ok(TradeEvent::Resource(_)) => unreachable!("mediated trades never return fills"),
                Err(crate::market::TradeRejection::NoSupply) if checked => {
                    self.emit(Actor::Agent(i), Some(action.id()), Event::Contested)
                }
                Err(e) => self.reject(i, action, format!("{e:?}")),
            }
        }

        for (i, &action) in actions.iter().enumerate() {
            if let AgentAction::Build { color } = action {
                match place_house(&mut self.grid, &mut self.agents[i], color, t, &build_terms, &mut self.rngs.income) {
                    Ok(built) => {
                        self.counts.builds += 1;
                        self.emit(
                            Actor::Agent(i),
                            Some(action.id()),
                            Event::Build {
                                pos: built.pos,
                                color: built.color,
                                income: built.income,
                                labor: build_terms.labor,
                            },
                        );
                    }
                    Err(e) => self.reject(i, action, format!("{e:?}")),
                }
            }
        }

        order.shuffle(&mut self.rngs.order);
        for &i in &order {
            let action = actions[i];
            let AgentAction::Move { direction } = action else {
                continue;
            };
            match apply_move(&mut self.grid, &mut self.agents, i, direction, &labor, &mut self.rngs.gather) {
                MoveOutcome::Moved { from, to, harvest } => {
                    self.emit(
                        Actor::Agent(i),
                        Some(action.id()),
                        Event::Move {
                            from,
                            to,
                            labor: labor.movement,
                        },
                    );
                    if let Some(h) = harvest {
                        self.gathered[h.resource.index()] += h.amount as u64;
                        self.emit(
                            Actor::Agent(i),
                            Some(action.id()),
                            Event::Gather {
                                resource: h.resource,
                                pos: h.pos,
                                amount: h.amount,
                                labor: labor.gather,
                            },
                        );
                    }
                }
                // Checked actions were legal when the step began, so these
                // can only come from another agent acting earlier this step.
                MoveOutcome::Rejected(crate::world::MoveRejection::Occupied | crate::world::MoveRejection::ForeignHouse)
                    if checked =>
                {
                    self.emit(Actor::Agent(i), Some(action.id()), Event::Contested)
                }
                MoveOutcome::Rejected(r) => self.reject(i, action, format!("{r:?}")),
            }
        }

        for order in self.market.expire(&mut self.agents, t) {
            self.emit(Actor::Agent(order.agent), None, Event::OrderExpired { order });
        }

        let cells = self.grid.regen_step(&mut self.rngs.regen);
        if !cells.is_empty() {
            self.emit(Actor::Env, None, Event::Regen { cells });
        }

        let period_record = if t % self.config.period_length == self.config.period_length - 1 {
            Some(self.close_period(t))
        } else {
            None
        };

        self.step += 1;
        let (uq, sq) = self.quantized_welfare();
        let agent_rewards = uq.iter().zip(&self.utility_q).map(|(new, old)| new - old).collect();
        let planner_reward = sq - self.swf_q;
        self.utility_q = uq;
        self.swf_q = sq;

        Ok(StepOutcome {
            observations: self.observations(),
            agent_rewards,
            planner_reward,
            done: self.done(),
            events: self.drain_events(),
            period_record,
        })
    }

    fn reject(&mut self, agent: AgentId, action: AgentAction, reason: String) {
        // Only reachable when the mask is bypassed or a same-step race lost.
        self.emit(Actor::Agent(agent), Some(action.id()), Event::Rejected { reason });
    }

    fn close_period(&mut self, t: u64) -> MetricsRecord {
        let period = self.ledger.period;
        let coins_before_collection: Coins = self.agents.iter().map(AgentState::total_coin).sum();
        let cancelled = collect_taxes(&mut self.ledger, &mut self.agents, &mut self.market);
        for order in cancelled {
            self.emit(Actor::Agent(order.agent), None, Event::OrderCancelled { order });
        }
        self.emit(
            Actor::Env,
            None,
            Event::TaxCollected {
                period,
                income: self.ledger.income.clone(),
                tax: self.ledger.tax.clone(),
                revenue: self.ledger.revenue,
            },
        );

        let disposition = dispose_revenue(&mut self.ledger, self.config.disposition, &mut self.agents);
        let mut allocation = [Coins::ZERO; 3];
        let mut spent = Coins::ZERO;
        let mut eligible = Vec::new();
        let mut ranking = None;
        let mut regen = self.grid.regen_profile();
        match disposition {
            Disposition::Redistributed { shares } => {
                self.emit(Actor::Env, None, Event::Redistributed { period, shares });
            }
            Disposition::Invested { .. } => {
                let coins: Vec<Coins> = self.agents.iter().map(AgentState::total_coin).collect();
                eligible = match self.config.governing.effective_institution() {
                    Some(inst) => filter_voters(inst, &coins, self.seed, period as u64),
                    None => (0..self.agents.len()).collect(),
                };
                let outcome = allocate_revenue(self.config.governing.system, &self.ledger.tax, &self.registry, &eligible);
                allocation = outcome.allocation.0;
                spent = outcome.allocation.total();
                ranking = outcome.ranking;
                regen = invested_regen(self.config.world.base_regen, &outcome.allocation, &self.config.investment);
                self.grid.set_regen_profile(regen);
                self.emit(
                    Actor::Env,
                    None,
                    Event::Invested {
                        period,
                        eligible: eligible.clone(),
                        ranking,
                        allocation,
                        regen,
                    },
                );
            }
        }

        let coins: Vec<Coins> = self.agents.iter().map(AgentState::total_coin).collect();
        let labor: Vec<_> = self.agents.iter().map(|a| a.labor).collect();
        let record = MetricsRecord::compute(PeriodClose {
            episode: self.episode,
            period,
            step: t,
            coins: &coins,
            labor: &labor,
            eta: self.config.economy.eta,
            reward: self.config.governing.reward,
            counts: self.counts,
            income: &self.ledger.income,
            tax: &self.ledger.tax,
            revenue: self.ledger.revenue,
            disposition: self.config.disposition,
            allocation,
        })
        .expect("eta validated");
        self.emit(Actor::Env, None, Event::PeriodClosed { period });

        self.previous = Some(PreviousPeriod {
            income: self.ledger.income.clone(),
            marginal: self.ledger.income.iter().map(|&z| self.ledger.schedule.marginal_rate(z)).collect(),
        });
        self.closed.push(ClosedPeriod {
            ledger: self.ledger.clone(),
            coins_before_collection,
            coins_after_disposition: coins.iter().sum(),
            spent,
            allocation,
            eligible,
            ranking,
            regen,
        });
        self.records.push(record.clone());
        record
    }

    /// Structural invariants that must hold between steps.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.agents.len();
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].iter().any(|b| b.pos == a.pos) {
                return Err(format!("agents share cell {:?}", a.pos));
            }
            // A house sold while its builder stands on it is not a violation;
            // only entering a foreign house is.
            if self.grid.cell(a.pos) == Cell::Water {
                return Err(format!("agent {i} on water"));
            }
            if a.coin.is_negative() || a.escrow_coin.is_negative() || a.labor.is_negative() {
                return Err(format!("agent {i} has a negative balance"));
            }
            if a.is_expert() && a.multiplier != self.initial_multipliers[i] {
                return Err(format!("expert {i} multiplier changed"));
            }
        }
        let book = self.market.book();
        let mut escrow_coin = vec![Coins::ZERO; n];
        let mut escrow_units = vec![[0u32; 3]; n];
        let mut open = vec![[0usize; 3]; n];
        let last = self.step.saturating_sub(1);
        for o in book.orders() {
            match o.side {
                Side::Bid => escrow_coin[o.agent] += Coins::from_price(o.price),
                Side::Ask => escrow_units[o.agent][o.resource.index()] += 1,
            }
            open[o.agent][o.resource.index()] += 1;
            if self.step > 0 && last - o.placed_at >= self.config.market.order_ttl {
                return Err(format!("order {} outlived its time-to-live", o.id));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.escrow_coin != escrow_coin[i] || a.escrow_units != escrow_units[i] {
                return Err(format!("agent {i} escrow does not match open orders"));
            }
            if open[i].iter().any(|&c| c > self.config.market.max_open_orders) {
                return Err(format!("agent {i} exceeds the open-order cap"));
            }
        }
        for r in Resource::ALL {
            if book.is_crossed(r) {
                return Err(format!("{r} book is crossed"));
            }
        }
        for r in Resource::ALL {
            let k = r.index();
            let held: u64 = self.agents.iter().map(|a| a.total_units(r) as u64).sum();
            let stocked = self.grid.stocked_count(r) as u64;
            if self.grid.spawned()[k] != stocked + self.grid.harvested()[k] {
                return Err(format!("{r} spawn/harvest accounting is off"));
            }
            let used: u64 = self
                .grid
                .houses()
                .iter()
                .filter(|h| h.color.components().contains(&r))
                .count() as u64;
            if held + used != self.gathered[k] {
                return Err(format!("{r} units held plus built do not equal units gathered"));
            }
        }
        for p in &self.closed {
            let revenue = p.ledger.revenue;
            if revenue != p.ledger.tax.iter().copied().sum::<Coins>() {
                return Err(format!("period {} revenue is not the sum of taxes", p.ledger.period));
            }
            match &p.ledger.disposition {
                Some(Disposition::Redistributed { shares }) => {
                    if shares.iter().copied().sum::<Coins>() != revenue
                        || p.coins_before_collection != p.coins_after_disposition
                    {
                        return Err(format!("period {} redistribution leaks coin", p.ledger.period));
                    }
                }
                Some(Disposition::Invested { forwarded }) => {
                    if *forwarded != revenue || p.spent != revenue {
                        return Err(format!("period {} treasury does not balance", p.ledger.period));
                    }
                    if p.coins_before_collection - revenue != p.coins_after_disposition {
                        return Err(format!("period {} investment leaks coin", p.ledger.period));
                    }
                }
                None => return Err(format!("period {} has no disposition", p.ledger.period)),
            }
        }
        Ok(())
    }
}
