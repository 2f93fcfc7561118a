//! Utility, equality, productivity, maximin, social welfare, activity
//! ratios and correlations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fiscal::DispositionMode;
use crate::units::{Coins, Labor};

/// Fixed-point scale for utilities and welfare values (1e-9 resolution).
/// Rewards are differences of quantized values, so episode sums telescope
/// exactly.
pub const VALUE_SCALE: f64 = 1e9;

/// Coin floor applied before inverse-income weighting.
pub const INVERSE_INCOME_FLOOR: f64 = 0.01;

pub fn quantize(value: f64) -> i64 {
    (value * VALUE_SCALE).round() as i64
}

pub fn dequantize(q: i64) -> f64 {
    q as f64 / VALUE_SCALE
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwfKind {
    #[default]
    EqTimesProd,
    InverseIncomeWeighted,
}

impl SwfKind {
    pub fn name(self) -> &'static str {
        match self {
            SwfKind::EqTimesProd => "eq-times-prod",
            SwfKind::InverseIncomeWeighted => "inverse-income-weighted",
        }
    }
}

impl fmt::Display for SwfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SwfKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "eq-times-prod" => Ok(SwfKind::EqTimesProd),
            "inverse-income-weighted" | "inverse-income" => Ok(SwfKind::InverseIncomeWeighted),
            other => Err(ConfigError::invalid("reward", format!("unknown value {other:?}"))),
        }
    }
}

/// Isoelastic utility of coin minus labor: `(C^(1-eta) - 1)/(1 - eta) - L`.
/// Negative coin is clamped to zero.
pub fn agent_utility(coin: f64, labor: f64, eta: f64) -> Result<f64, ConfigError> {
    if eta.is_nan() || eta <= 0.0 || eta == 1.0 {
        return Err(ConfigError::invalid("eta", format!("{eta} must be positive and not 1")));
    }
    let c = coin.max(0.0);
    Ok((c.powf(1.0 - eta) - 1.0) / (1.0 - eta) - labor)
}

/// Gini index `sum_ij |C_i - C_j| / (2 N sum C)`; zero for an all-zero population.
pub fn gini(coins: &[f64]) -> f64 {
    let n = coins.len();
    let total: f64 = coins.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut abs_diff = 0.0;
    for &a in coins {
        for &b in coins {
            abs_diff += (a - b).abs();
        }
    }
    abs_diff / (2.0 * n as f64 * total)
}

/// `1 - N/(N-1) * gini`, defined as 1 when total coin is zero or N < 2.
pub fn equality(coins: &[f64]) -> f64 {
    let n = coins.len();
    if n < 2 || coins.iter().sum::<f64>() <= 0.0 {
        return 1.0;
    }
    let eq = 1.0 - gini(coins) * n as f64 / (n as f64 - 1.0);
    eq.clamp(0.0, 1.0)
}

pub fn productivity(coins: &[f64]) -> f64 {
    coins.iter().sum()
}

/// Smallest endowment in the population.
pub fn maximin(coins: &[f64]) -> f64 {
    coins.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Normalized `1/max(C_i, 0.01)` weights.
pub fn inverse_income_weights(coins: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = coins.iter().map(|&c| 1.0 / c.max(INVERSE_INCOME_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|w| w / total).collect()
}

pub fn swf(kind: SwfKind, coins: &[f64], utilities: &[f64]) -> f64 {
    match kind {
        SwfKind::EqTimesProd => equality(coins) * productivity(coins),
        SwfKind::InverseIncomeWeighted => inverse_income_weights(coins)
            .iter()
            .zip(utilities)
            .map(|(w, u)| w * u)
            .sum(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityCounts {
    pub builds: u64,
    pub house_trades: u64,
    pub skill_trades: u64,
    pub resource_trades: u64,
}

/// `numerator / max(denominator, 1)`; the flag marks a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub zero_denominator: bool,
}

impl Ratio {
    pub fn of(numerator: u64, denominator: u64) -> Self {
        Ratio {
            value: numerator as f64 / denominator.max(1) as f64,
            zero_denominator: denominator == 0,
        }
    }
}

/// (build : house-trade, build : skill-trade).
pub fn activity_ratios(counts: &ActivityCounts) -> (Ratio, Ratio) {
    (
        Ratio::of(counts.builds, counts.house_trades),
        Ratio::of(counts.builds, counts.skill_trades),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Correlation {
    Defined { r: f64 },
    /// Fewer than two samples or a constant series.
    Degenerate,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined { r } => Some(r),
            Correlation::Degenerate => None,
        }
    }
}

/// Pearson product-moment correlation of two equal-length series.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Correlation::Degenerate;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation::Degenerate;
    }
    Correlation::Defined {
        r: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Inputs for a period-end snapshot, gathered either from a live
/// environment or from a replayed trace.
#[derive(Clone, Copy, Debug)]
pub struct PeriodClose<'a> {
    pub episode: u32,
    pub period: u32,
    pub step: u64,
    pub coins: &'a [Coins],
    pub labor: &'a [Labor],
    pub eta: f64,
    pub reward: SwfKind,
    pub counts: ActivityCounts,
    pub income: &'a [Coins],
    pub tax: &'a [Coins],
    pub revenue: Coins,
    pub disposition: DispositionMode,
    pub allocation: [Coins; 3],
}

/// Per-period snapshot written to the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: u32,
    pub period: u32,
    pub step: u64,
    pub coins: Vec<Coins>,
    pub labor: Vec<Labor>,
    pub utilities: Vec<f64>,
    pub equality: f64,
    pub productivity: f64,
    pub maximin: f64,
    pub swf: f64,
    pub counts: ActivityCounts,
    pub build_house_ratio: Ratio,
    pub build_skill_ratio: Ratio,
    pub income: Vec<Coins>,
    pub tax: Vec<Coins>,
    pub revenue: Coins,
    pub disposition: DispositionMode,
    pub allocation: [Coins; 3],
}

impl MetricsRecord {
    pub fn compute(close: PeriodClose<'_>) -> Result<Self, ConfigError> {
        let coins: Vec<f64> = close.coins.iter().map(|c| c.as_f64()).collect();
        let utilities = close
            .coins
            .iter()
            .zip(close.labor)
            .map(|(c, l)| agent_utility(c.as_f64(), l.as_f64(), close.eta))
            .collect::<Result<Vec<_>, _>>()?;
        let (build_house_ratio, build_skill_ratio) = activity_ratios(&close.counts);
        Ok(MetricsRecord {
            episode: close.episode,
            period: close.period,
            step: close.step,
            coins: close.coins.to_vec(),
            labor: close.labor.to_vec(),
            equality: equality(&coins),
            productivity: productivity(&coins),
            maximin: maximin(&coins),
            swf: swf(close.reward, &coins, &utilities),
            utilities,
            counts: close.counts,
            build_house_ratio,
            build_skill_ratio,
            income: close.income.to_vec(),
            tax: close.tax.to_vec(),
            revenue: close.revenue,
            disposition: close.disposition,
            allocation: close.allocation,
        })
    }

    pub fn csv_header(n_agents: usize) -> String {
        let mut cols: Vec<String> = [
            "episode",
            "period",
            "step",
            "equality",
            "productivity",
            "maximin",
            "swf",
            "builds",
            "house_trades",
            "skill_trades",
            "resource_trades",
            "build_house_ratio",
            "build_house_zero",
            "build_skill_ratio",
            "build_skill_zero",
            "revenue",
            "disposition",
            "alloc_wood",
            "alloc_stone",
            "alloc_iron",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for field in ["coin", "labor", "utility", "income", "tax"] {
            cols.extend((0..n_agents).map(|i| format!("{field}_{i}")));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.episode.to_string(),
            self.period.to_string(),
            self.step.to_string(),
            self.equality.to_string(),
            self.productivity.to_string(),
            self.maximin.to_string(),
            self.swf.to_string(),
            self.counts.builds.to_string(),
            self.counts.house_trades.to_string(),
            self.counts.skill_trades.to_string(),
            self.counts.resource_trades.to_string(),
            self.build_house_ratio.value.to_string(),
            self.build_house_ratio.zero_denominator.to_string(),
            self.build_skill_ratio.value.to_string(),
            self.build_skill_ratio.zero_denominator.to_string(),
            self.revenue.to_string(),
            match self.disposition {
                DispositionMode::Redistribute => "redistribute".to_string(),
                DispositionMode::Invest => "invest".to_string(),
            },
        ];
        cols.extend(self.allocation.iter().map(Coins::to_string));
        cols.extend(self.coins.iter().map(Coins::to_string));
        cols.extend(self.labor.iter().map(|l| l.as_f64().to_string()));
        cols.extend(self.utilities.iter().map(f64::to_string));
        cols.extend(self.income.iter().map(Coins::to_string));
        cols.extend(self.tax.iter().map(Coins::to_string));
        cols.join(",")
    }
}

/// Renders records as a CSV table with a trailing newline.
pub fn metrics_csv(n_agents: usize, records: &[MetricsRecord]) -> String {
    let mut out = MetricsRecord::csv_header(n_agents);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
