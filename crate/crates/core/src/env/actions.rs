//! Flat action catalogs.
//!
//! Agent ids: 4 moves, 66 resource orders (resource x side x price), 3 builds,
//! 3 house purchases, 1 skill purchase, 6 votes, 1 no-op = 84.
//! Planner ids: 7 brackets x 22 settings, 6 votes, 1 no-op = 161.

use serde::{Deserialize, Serialize};

use crate::fiscal::{BracketSetting, NUM_BRACKETS, SETTINGS_PER_BRACKET};
use crate::governance::Ranking;
use crate::market::{Side, PRICE_LEVELS};
use crate::units::{Direction, HouseColor, Resource};

pub type ActionId = usize;

const MOVE_BASE: usize = 0;
const ORDER_BASE: usize = MOVE_BASE + 4;
const ORDERS_PER_RESOURCE: usize = 2 * PRICE_LEVELS;
const BUILD_BASE: usize = ORDER_BASE + 3 * ORDERS_PER_RESOURCE;
const BUY_HOUSE_BASE: usize = BUILD_BASE + 3;
const BUY_SKILL: usize = BUY_HOUSE_BASE + 3;
const AGENT_VOTE_BASE: usize = BUY_SKILL + 1;
pub const AGENT_NOOP: ActionId = AGENT_VOTE_BASE + 6;
pub const AGENT_ACTIONS: usize = AGENT_NOOP + 1;

const PLANNER_VOTE_BASE: usize = NUM_BRACKETS * SETTINGS_PER_BRACKET;
pub const PLANNER_NOOP: ActionId = PLANNER_VOTE_BASE + 6;
pub const PLANNER_ACTIONS: usize = PLANNER_NOOP + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    Move { direction: Direction },
    Order { resource: Resource, side: Side, price: u8 },
    Build { color: HouseColor },
    BuyHouse { color: HouseColor },
    BuySkill,
    Vote { ranking: Ranking },
    Noop,
}

impl AgentAction {
    pub fn from_id(id: ActionId) -> Option<Self> {
        Some(match id {
            i if i < ORDER_BASE => AgentAction::Move {
                direction: Direction::ALL[i - MOVE_BASE],
            },
            i if i < BUILD_BASE => {
                let k = i - ORDER_BASE;
                let resource = Resource::from_index(k / ORDERS_PER_RESOURCE)?;
                let within = k % ORDERS_PER_RESOURCE;
                let side = if within < PRICE_LEVELS { Side::Bid } else { Side::Ask };
                AgentAction::Order {
                    resource,
                    side,
                    price: (within % PRICE_LEVELS) as u8,
                }
            }
            i if i < BUY_HOUSE_BASE => AgentAction::Build {
                color: HouseColor::from_index(i - BUILD_BASE)?,
            },
            i if i < BUY_SKILL => AgentAction::BuyHouse {
                color: HouseColor::from_index(i - BUY_HOUSE_BASE)?,
            },
            BUY_SKILL => AgentAction::BuySkill,
            i if i < AGENT_NOOP => AgentAction::Vote {
                ranking: Ranking::from_index(i - AGENT_VOTE_BASE)?,
            },
            AGENT_NOOP => AgentAction::Noop,
            _ => return None,
        })
    }

    pub fn id(self) -> ActionId {
        match self {
            AgentAction::Move { direction } => MOVE_BASE + Direction::ALL.iter().position(|&d| d == direction).unwrap(),
            AgentAction::Order { resource, side, price } => {
                let side_offset = if side == Side::Bid { 0 } else { PRICE_LEVELS };
                ORDER_BASE + resource.index() * ORDERS_PER_RESOURCE + side_offset + price as usize
            }
            AgentAction::Build { color } => BUILD_BASE + color.index(),
            AgentAction::BuyHouse { color } => BUY_HOUSE_BASE + color.index(),
            AgentAction::BuySkill => BUY_SKILL,
            AgentAction::Vote { ranking } => AGENT_VOTE_BASE + ranking.index(),
            AgentAction::Noop => AGENT_NOOP,
        }
    }

    pub fn catalog() -> Vec<AgentAction> {
        (0..AGENT_ACTIONS).map(|i| Self::from_id(i).expect("dense catalog")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlannerAction {
    SetRate { bracket: usize, setting: BracketSetting },
    Vote { ranking: Ranking },
    Noop,
}

impl PlannerAction {
    pub fn from_id(id: ActionId) -> Option<Self> {
        Some(match id {
            i if i < PLANNER_VOTE_BASE => PlannerAction::SetRate {
                bracket: i / SETTINGS_PER_BRACKET,
                setting: BracketSetting::from_index(i % SETTINGS_PER_BRACKET)?,
            },
            i if i < PLANNER_NOOP => PlannerAction::Vote {
                ranking: Ranking::from_index(i - PLANNER_VOTE_BASE)?,
            },
            PLANNER_NOOP => PlannerAction::Noop,
            _ => return None,
        })
    }

    pub fn id(self) -> ActionId {
        match self {
            PlannerAction::SetRate { bracket, setting } => bracket * SETTINGS_PER_BRACKET + setting.index(),
            PlannerAction::Vote { ranking } => PLANNER_VOTE_BASE + ranking.index(),
            PlannerAction::Noop => PLANNER_NOOP,
        }
    }

    pub fn catalog() -> Vec<PlannerAction> {
        (0..PLANNER_ACTIONS).map(|i| Self::from_id(i).expect("dense catalog")).collect()
    }
}
