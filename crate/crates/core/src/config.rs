//! Environment configuration and its validation.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fiscal::DispositionMode;
use crate::governance::GoverningConfig;
use crate::income::Jitter;
use crate::units::{Coins, Labor, Multiplier, Pos};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub height: usize,
    pub width: usize,
    /// Fraction of all cells that become source cells, per resource.
    pub source_density: [f64; 3],
    pub water: Vec<Pos>,
    /// Per-step refill probability of an empty source cell before investment.
    pub base_regen: [f64; 3],
    pub initially_stocked: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            height: 25,
            width: 25,
            source_density: [0.05; 3],
            water: Vec::new(),
            base_regen: [0.01; 3],
            initially_stocked: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaborCosts {
    #[serde(rename = "move")]
    pub movement: Labor,
    pub gather: Labor,
    pub resource_trade: Labor,
    pub build: Labor,
    pub house_trade: Labor,
    pub skill_trade: Labor,
}

impl Default for LaborCosts {
    fn default() -> Self {
        LaborCosts {
            movement: Labor::from_hundredths(21),
            gather: Labor::from_hundredths(21),
            resource_trade: Labor::from_hundredths(5),
            build: Labor::from_hundredths(210),
            house_trade: Labor::ZERO,
            skill_trade: Labor::ZERO,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconomyParams {
    pub pay_base: Coins,
    pub skill_threshold: Multiplier,
    pub skill_delta: Multiplier,
    pub expert_multiplier: (Multiplier, Multiplier),
    pub novice_multiplier: (Multiplier, Multiplier),
    pub gather_skill_max: f64,
    pub eta: f64,
    pub jitter: Jitter,
    pub labor: LaborCosts,
}

impl Default for EconomyParams {
    fn default() -> Self {
        EconomyParams {
            pay_base: Coins::from_whole(10),
            skill_threshold: Multiplier::from_milli(1000),
            skill_delta: Multiplier::from_milli(100),
            expert_multiplier: (Multiplier::from_milli(1100), Multiplier::from_milli(1500)),
            novice_multiplier: (Multiplier::from_milli(500), Multiplier::from_milli(900)),
            gather_skill_max: 0.5,
            eta: 0.23,
            jitter: Jitter::default(),
            labor: LaborCosts::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketParams {
    pub max_open_orders: usize,
    pub order_ttl: u64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            max_open_orders: 5,
            order_ttl: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvestmentParams {
    pub alpha: f64,
    pub coin_scale: f64,
    pub regen_max: f64,
}

impl Default for InvestmentParams {
    fn default() -> Self {
        InvestmentParams {
            alpha: 0.02,
            coin_scale: 1.0,
            regen_max: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub n_experts: usize,
    pub n_novices: usize,
    pub governing: GoverningConfig,
    pub disposition: DispositionMode,
    pub economy: EconomyParams,
    pub market: MarketParams,
    pub cutoff_scale: f64,
    pub investment: InvestmentParams,
    pub steps_per_episode: u64,
    pub period_length: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            world: WorldConfig::default(),
            n_experts: 3,
            n_novices: 3,
            governing: GoverningConfig::default(),
            disposition: DispositionMode::Invest,
            economy: EconomyParams::default(),
            market: MarketParams::default(),
            cutoff_scale: 1.0,
            investment: InvestmentParams::default(),
            steps_per_episode: 1000,
            period_length: 100,
        }
    }
}

fn probability(field: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{p} is not a probability")))
    }
}

impl EnvConfig {
    pub fn n_agents(&self) -> usize {
        self.n_experts + self.n_novices
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        if w.height == 0 || w.width == 0 {
            return Err(ConfigError::invalid("world", "dimensions must be positive"));
        }
        for &d in &w.source_density {
            if !(0.0..=1.0).contains(&d) {
                return Err(ConfigError::invalid("source_density", format!("{d} outside [0, 1]")));
            }
        }
        for &p in &w.base_regen {
            probability("base_regen", p)?;
        }
        if let Some(&(r, c)) = w.water.iter().find(|&&(r, c)| r >= w.height || c >= w.width) {
            return Err(ConfigError::invalid("water", format!("cell ({r}, {c}) outside the grid")));
        }
        if self.n_agents() == 0 {
            return Err(ConfigError::invalid("agents", "need at least one agent"));
        }
        let e = &self.economy;
        if e.eta.is_nan() || e.eta <= 0.0 || e.eta == 1.0 {
            return Err(ConfigError::invalid("eta", format!("{} must be positive and not 1", e.eta)));
        }
        if e.pay_base.is_negative() {
            return Err(ConfigError::invalid("pay_base", "must be non-negative"));
        }
        if e.skill_delta <= Multiplier::ZERO {
            return Err(ConfigError::invalid("skill_delta", "must be positive"));
        }
        let (lo, hi) = e.expert_multiplier;
        if lo > hi || lo < e.skill_threshold {
            return Err(ConfigError::invalid(
                "expert_multiplier",
                "range must be ordered and at or above the build threshold",
            ));
        }
        let (lo, hi) = e.novice_multiplier;
        if lo > hi || hi >= e.skill_threshold || lo.is_negative() {
            return Err(ConfigError::invalid(
                "novice_multiplier",
                "range must be ordered, non-negative and below the build threshold",
            ));
        }
        probability("gather_skill_max", e.gather_skill_max)?;
        if !(e.jitter.low > 0.0 && e.jitter.low <= e.jitter.high) {
            return Err(ConfigError::invalid("jitter", "need 0 < low <= high"));
        }
        for labor in [
            e.labor.movement,
            e.labor.gather,
            e.labor.resource_trade,
            e.labor.build,
            e.labor.house_trade,
            e.labor.skill_trade,
        ] {
            if labor.is_negative() {
                return Err(ConfigError::invalid("labor", "costs must be non-negative"));
            }
        }
        if self.market.max_open_orders == 0 || self.market.order_ttl == 0 {
            return Err(ConfigError::invalid("market", "order cap and ttl must be positive"));
        }
        if self.cutoff_scale.is_nan() || self.cutoff_scale <= 0.0 {
            return Err(ConfigError::invalid("cutoff_scale", "must be positive"));
        }
        let inv = &self.investment;
        probability("regen_max", inv.regen_max)?;
        if inv.alpha < 0.0 || inv.coin_scale.is_nan() || inv.coin_scale <= 0.0 {
            return Err(ConfigError::invalid("investment", "alpha >= 0 and coin_scale > 0 required"));
        }
        if self.period_length == 0 || self.steps_per_episode == 0 || !self.steps_per_episode.is_multiple_of(self.period_length) {
            return Err(ConfigError::invalid(
                "steps_per_episode",
                "must be a positive multiple of the period length",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = EnvConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_agents(), 6);
        assert_eq!(cfg.steps_per_episode / cfg.period_length, 10);
    }

    #[test]
    fn rejects_bad_eta_and_period() {
        let mut cfg = EnvConfig::default();
        cfg.economy.eta = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = EnvConfig {
            steps_per_episode: 150,
            ..EnvConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.economy.eta = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: EnvConfig = serde_json::from_str(r#"{"steps_per_episode": 200, "economy": {"eta": 0.5}}"#).unwrap();
        assert_eq!(cfg.steps_per_episode, 200);
        assert_eq!(cfg.economy.eta, 0.5);
        assert_eq!(cfg.economy.pay_base, Coins::from_whole(10));
        assert_eq!(cfg.world.height, 25);
    }
}
