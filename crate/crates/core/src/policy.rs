//! Scripted policies: uniform random over legal actions, a rule-based
//! expert/novice heuristic, and fixed tax-table planners.
//!
//! Every policy is a pure function of observation, mask and its own RNG
//! stream, so replaying a seed reproduces the same actions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Role;
use crate::env::observation::{spatial_index, SPATIAL_CHANNELS, VIEW, VIEW_RADIUS};
use crate::env::{ActionId, AgentAction, Env, ObservationLayout, Observations, PlannerAction, AGENT_NOOP, PLANNER_NOOP};
use crate::error::ConfigError;
use crate::fiscal::{BracketSetting, TaxRate, NUM_BRACKETS};
use crate::governance::Ranking;
use crate::market::Side;
use crate::rng::{substream, SimRng, Stream};
use crate::units::{Direction, HouseColor, Resource};

/// Ask (and expert bid) price used by the heuristic.
pub const HEURISTIC_PRICE: u8 = 5;

/// Rate levels (in 0.05 steps) of the progressive table.
pub const PROGRESSIVE_US_LEVELS: [u8; NUM_BRACKETS] = [2, 2, 4, 5, 6, 7, 7];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentPolicyKind {
    #[default]
    Heuristic,
    Random,
    Noop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerPolicyKind {
    #[default]
    FreeMarket,
    Flat10,
    ProgressiveUs,
    Random,
    Noop,
}

impl AgentPolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentPolicyKind::Heuristic => "heuristic",
            AgentPolicyKind::Random => "random",
            AgentPolicyKind::Noop => "noop",
        }
    }
}

impl PlannerPolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerPolicyKind::FreeMarket => "free-market",
            PlannerPolicyKind::Flat10 => "flat10",
            PlannerPolicyKind::ProgressiveUs => "progressive-us",
            PlannerPolicyKind::Random => "random",
            PlannerPolicyKind::Noop => "noop",
        }
    }

    /// Fixed rate levels for the scripted tables.
    pub fn table(self) -> Option<[u8; NUM_BRACKETS]> {
        match self {
            PlannerPolicyKind::FreeMarket => Some([0; NUM_BRACKETS]),
            PlannerPolicyKind::Flat10 => Some([2; NUM_BRACKETS]),
            PlannerPolicyKind::ProgressiveUs => Some(PROGRESSIVE_US_LEVELS),
            PlannerPolicyKind::Random | PlannerPolicyKind::Noop => None,
        }
    }
}

impl FromStr for AgentPolicyKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        [AgentPolicyKind::Heuristic, AgentPolicyKind::Random, AgentPolicyKind::Noop]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::invalid("agent policy", format!("unknown policy {s:?}")))
    }
}

impl FromStr for PlannerPolicyKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        [
            PlannerPolicyKind::FreeMarket,
            PlannerPolicyKind::Flat10,
            PlannerPolicyKind::ProgressiveUs,
            PlannerPolicyKind::Random,
            PlannerPolicyKind::Noop,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| ConfigError::invalid("planner policy", format!("unknown policy {s:?}")))
    }
}

impl fmt::Display for AgentPolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for PlannerPolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Uniform draw over mask-true ids. Falls back to the last id, which is
/// the no-op in both catalogs.
pub fn random_valid(mask: &[bool], rng: &mut SimRng) -> ActionId {
    let legal: Vec<ActionId> = mask.iter().enumerate().filter(|(_, &ok)| ok).map(|(i, _)| i).collect();
    if legal.is_empty() {
        mask.len().saturating_sub(1)
    } else {
        legal[rng.gen_range(0..legal.len())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicProfile {
    pub role: Role,
    pub threshold: f64,
}

struct View<'a> {
    layout: &'a ObservationLayout,
    obs: &'a [f64],
}

impl View<'_> {
    fn get(&self, name: &str) -> &[f64] {
        self.layout.slice(self.obs, name)
    }

    fn free_units(&self, r: Resource) -> f64 {
        self.get("free_inventory")[r.index()]
    }

    fn total_units(&self, r: Resource) -> f64 {
        self.get("inventory")[r.index()]
    }

    /// Offset from the agent to the nearest stocked source of any of `wanted`.
    fn nearest_stocked(&self, wanted: &[Resource]) -> Option<(isize, isize)> {
        let spatial = self.get("spatial");
        let stocked = SPATIAL_CHANNELS.iter().position(|&c| c == "stocked_wood").expect("channel");
        let mut best: Option<(usize, (isize, isize))> = None;
        for dy in 0..VIEW {
            for dx in 0..VIEW {
                if !wanted.iter().any(|r| spatial[spatial_index(stocked + r.index(), dy, dx)] > 0.0) {
                    continue;
                }
                let off = (dy as isize - VIEW_RADIUS as isize, dx as isize - VIEW_RADIUS as isize);
                let dist = off.0.unsigned_abs() + off.1.unsigned_abs();
                if dist > 0 && best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, off));
                }
            }
        }
        best.map(|(_, off)| off)
    }
}

/// Color needing the fewest missing components; ties follow color order.
fn target_color(view: &View<'_>) -> (HouseColor, Vec<Resource>) {
    HouseColor::ALL
        .iter()
        .map(|&c| {
            let missing: Vec<Resource> = c.components().into_iter().filter(|&r| view.free_units(r) < 1.0).collect();
            (c, missing)
        })
        .min_by_key(|(_, m)| m.len())
        .expect("three colors")
}

fn legal(mask: &[bool], action: AgentAction) -> Option<ActionId> {
    let id = action.id();
    mask[id].then_some(id)
}

fn step_toward(mask: &[bool], offset: (isize, isize)) -> Option<ActionId> {
    Direction::ALL
        .iter()
        .filter(|d| {
            let (dy, dx) = d.delta();
            (dy != 0 && dy.signum() == offset.0.signum()) || (dx != 0 && dx.signum() == offset.1.signum())
        })
        .find_map(|&direction| legal(mask, AgentAction::Move { direction }))
}

fn random_move(mask: &[bool], rng: &mut SimRng) -> Option<ActionId> {
    let moves: Vec<ActionId> = Direction::ALL
        .iter()
        .filter_map(|&direction| legal(mask, AgentAction::Move { direction }))
        .collect();
    (!moves.is_empty()).then(|| moves[rng.gen_range(0..moves.len())])
}

/// Ranking that puts the least-held resource first; ties follow resource order.
pub fn scarcity_vote(holdings: [f64; 3]) -> Ranking {
    let mut order = Resource::ALL;
    order.sort_by(|a, b| holdings[a.index()].total_cmp(&holdings[b.index()]));
    Ranking::new(order).expect("sorted permutation")
}

/// Rule-based gather-trade-build behavior.
///
/// Both profiles vote for their scarcest resource at each period start.
/// Novices below the build threshold buy skill, and otherwise buy houses
/// when they cannot build. Everyone builds when a recipe is complete,
/// gathers toward the nearest needed resource and sells surplus at a fixed
/// ask. Experts also bid for a single missing component.
pub fn heuristic_agent(profile: HeuristicProfile, layout: &ObservationLayout, obs: &[f64], mask: &[bool], rng: &mut SimRng) -> ActionId {
    let view = View { layout, obs };
    let progress = view.get("period_progress")[0];
    if progress == 0.0 {
        let holdings = [0, 1, 2].map(|i| view.total_units(Resource::ALL[i]));
        if let Some(id) = legal(mask, AgentAction::Vote { ranking: scarcity_vote(holdings) }) {
            return id;
        }
    }

    let novice = profile.role == Role::Novice;
    let multiplier = view.get("multiplier")[0];
    if novice && multiplier < profile.threshold {
        if let Some(id) = legal(mask, AgentAction::BuySkill) {
            return id;
        }
    }

    let (target, missing) = target_color(&view);
    let build = std::iter::once(target)
        .chain(HouseColor::ALL)
        .find_map(|color| legal(mask, AgentAction::Build { color }));
    if let Some(id) = build {
        return id;
    }

    if novice {
        if let Some(id) = HouseColor::ALL
            .iter()
            .find_map(|&color| legal(mask, AgentAction::BuyHouse { color }))
        {
            return id;
        }
    }

    let can_build = multiplier >= profile.threshold;
    let wanted: Vec<Resource> = if can_build && !missing.is_empty() {
        missing.clone()
    } else {
        Resource::ALL.to_vec()
    };
    if !can_build || !missing.is_empty() {
        if let Some(id) = view.nearest_stocked(&wanted).and_then(|off| step_toward(mask, off)) {
            return id;
        }
    }

    if !novice && missing.len() == 1 {
        let bid = AgentAction::Order {
            resource: missing[0],
            side: Side::Bid,
            price: HEURISTIC_PRICE,
        };
        if let Some(id) = legal(mask, bid) {
            return id;
        }
    }

    // Surplus: anything a builder does not need for its target recipe, or
    // everything held by someone who cannot build.
    let keep = if can_build { target.components().to_vec() } else { Vec::new() };
    let surplus = Resource::ALL.iter().copied().find(|&r| {
        let reserve = if keep.contains(&r) { 1.0 } else { 0.0 };
        view.free_units(r) > reserve
    });
    if let Some(resource) = surplus {
        let ask = AgentAction::Order {
            resource,
            side: Side::Ask,
            price: HEURISTIC_PRICE,
        };
        if let Some(id) = legal(mask, ask) {
            return id;
        }
    }

    random_move(mask, rng).unwrap_or(AGENT_NOOP)
}

/// Planner action ids for one step. Tables and random rates apply only at
/// a period boundary; the vote is cast whenever legal.
pub fn planner_actions(kind: PlannerPolicyKind, vote: Ranking, mask: &[bool], rng: &mut SimRng) -> Vec<ActionId> {
    let mut out = Vec::new();
    let boundary = mask[PlannerAction::SetRate {
        bracket: 0,
        setting: BracketSetting::Keep,
    }
    .id()];
    if boundary {
        match kind.table() {
            Some(levels) => {
                for (bracket, level) in levels.into_iter().enumerate() {
                    let rate = TaxRate::from_level(level).expect("table levels are on the grid");
                    out.push(
                        PlannerAction::SetRate {
                            bracket,
                            setting: BracketSetting::Rate(rate),
                        }
                        .id(),
                    );
                }
            }
            None if kind == PlannerPolicyKind::Random => {
                for bracket in 0..NUM_BRACKETS {
                    let setting = BracketSetting::from_index(rng.gen_range(0..crate::fiscal::SETTINGS_PER_BRACKET))
                        .expect("index in range");
                    out.push(PlannerAction::SetRate { bracket, setting }.id());
                }
            }
            None => {}
        }
    }
    if kind != PlannerPolicyKind::Noop {
        let ranking = if kind == PlannerPolicyKind::Random {
            Ranking::ALL[rng.gen_range(0..Ranking::ALL.len())]
        } else {
            vote
        };
        let id = PlannerAction::Vote { ranking }.id();
        if mask[id] && boundary {
            out.push(id);
        }
    }
    if out.is_empty() {
        out.push(PLANNER_NOOP);
    }
    out
}

/// Per-actor policies with independent RNG streams keyed by the episode seed.
#[derive(Clone, Debug)]
pub struct PolicySet {
    agent: AgentPolicyKind,
    planner: PlannerPolicyKind,
    planner_vote: Ranking,
    profiles: Vec<HeuristicProfile>,
    agent_rngs: Vec<SimRng>,
    planner_rng: SimRng,
}

impl PolicySet {
    pub fn new(agent: AgentPolicyKind, planner: PlannerPolicyKind, planner_vote: Ranking, env: &Env) -> Self {
        let seed = env.seed();
        let threshold = env.config().economy.skill_threshold.as_f64();
        let n = env.n_agents();
        PolicySet {
            agent,
            planner,
            planner_vote,
            profiles: env
                .agents()
                .iter()
                .map(|a| HeuristicProfile { role: a.role, threshold })
                .collect(),
            agent_rngs: (0..n).map(|i| substream(seed, Stream::Policy, i as u64)).collect(),
            planner_rng: substream(seed, Stream::Policy, n as u64),
        }
    }

    pub fn act(&mut self, env: &Env, obs: &Observations) -> (Vec<ActionId>, Vec<ActionId>) {
        let layout = env.agent_layout();
        let agents = (0..env.n_agents())
            .map(|i| {
                let mask = env.agent_mask(i);
                let rng = &mut self.agent_rngs[i];
                match self.agent {
                    AgentPolicyKind::Heuristic => heuristic_agent(self.profiles[i], &layout, &obs.agents[i], &mask, rng),
                    AgentPolicyKind::Random => random_valid(&mask, rng),
                    AgentPolicyKind::Noop => AGENT_NOOP,
                }
            })
            .collect();
        let planner = planner_actions(self.planner, self.planner_vote, &env.planner_mask(), &mut self.planner_rng);
        (agents, planner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::AGENT_ACTIONS;

    #[test]
    fn random_valid_respects_mask() {
        let mut rng = substream(1, Stream::Policy, 0);
        let mut mask = vec![false; AGENT_ACTIONS];
        for i in [3, 40, 83] {
            mask[i] = true;
        }
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            match random_valid(&mask, &mut rng) {
                3 => counts[0] += 1,
                40 => counts[1] += 1,
                83 => counts[2] += 1,
                other => panic!("mask-false action {other}"),
            }
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn scarcity_vote_orders_by_holdings() {
        assert_eq!(scarcity_vote([3.0, 0.0, 1.0]).order(), [Resource::Stone, Resource::Iron, Resource::Wood]);
        assert_eq!(scarcity_vote([0.0, 0.0, 0.0]), Ranking::DEFAULT);
    }

    #[test]
    fn scripted_tables() {
        let mut rng = substream(0, Stream::Policy, 0);
        let mut mask = vec![true; crate::env::PLANNER_ACTIONS];
        let ids = planner_actions(PlannerPolicyKind::Flat10, Ranking::DEFAULT, &mask, &mut rng);
        let rates: Vec<_> = ids.iter().filter_map(|&id| PlannerAction::from_id(id)).collect();
        assert_eq!(rates.len(), 8);
        for a in &rates[..7] {
            assert!(matches!(a, PlannerAction::SetRate { setting: BracketSetting::Rate(r), .. } if r.level() == 2));
        }
        assert_eq!(rates[7], PlannerAction::Vote { ranking: Ranking::DEFAULT });
        for m in mask.iter_mut() {
            *m = false;
        }
        mask[PLANNER_NOOP] = true;
        assert_eq!(planner_actions(PlannerPolicyKind::ProgressiveUs, Ranking::DEFAULT, &mask, &mut rng), vec![PLANNER_NOOP]);
    }

    #[test]
    fn names_round_trip() {
        for k in ["heuristic", "random", "noop"] {
            assert_eq!(k.parse::<AgentPolicyKind>().unwrap().name(), k);
        }
        for k in ["free-market", "flat10", "progressive-us", "random", "noop"] {
            assert_eq!(k.parse::<PlannerPolicyKind>().unwrap().name(), k);
        }
        assert!("ppo".parse::<PlannerPolicyKind>().is_err());
    }
}
