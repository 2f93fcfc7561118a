use serde::{Deserialize, Serialize};

use crate::governance::Ranking;
use crate::units::{AgentId, Coins, Labor, Multiplier, Pos, Resource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Expert,
    Novice,
}

/// Per-agent endowment and private characteristics.
///
/// Coins and resource units committed to open market orders sit in escrow;
/// the endowment the economy measures is free plus escrowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub pos: Pos,
    pub coin: Coins,
    pub escrow_coin: Coins,
    pub inventory: [u32; 3],
    pub escrow_units: [u32; 3],
    pub labor: Labor,
    pub multiplier: Multiplier,
    pub gather_skill: f64,
    pub skill_units: u32,
    pub last_vote: Option<Ranking>,
}

impl AgentState {
    pub fn new(id: AgentId, role: Role, pos: Pos, multiplier: Multiplier, gather_skill: f64) -> Self {
        Self {
            id,
            role,
            pos,
            coin: Coins::ZERO,
            escrow_coin: Coins::ZERO,
            inventory: [0; 3],
            escrow_units: [0; 3],
            labor: Labor::ZERO,
            multiplier,
            gather_skill,
            skill_units: 0,
            last_vote: None,
        }
    }

    pub fn total_coin(&self) -> Coins {
        self.coin + self.escrow_coin
    }

    pub fn free_units(&self, resource: Resource) -> u32 {
        self.inventory[resource.index()]
    }

    pub fn total_units(&self, resource: Resource) -> u32 {
        self.inventory[resource.index()] + self.escrow_units[resource.index()]
    }

    pub fn is_expert(&self) -> bool {
        self.role == Role::Expert
    }

    pub fn is_novice(&self) -> bool {
        self.role == Role::Novice
    }
}
