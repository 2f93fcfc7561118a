//! Bracketed marginal taxation and the per-period fiscal ledger.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::ConfigError;
use crate::market::{Market, Order};
use crate::units::Coins;

pub const NUM_BRACKETS: usize = 7;
/// Rate levels run 0..=20, i.e. 0.00 to 1.00 in steps of 0.05.
pub const MAX_RATE_LEVEL: u8 = 20;
/// 21 rate levels plus "keep the previous rate".
pub const SETTINGS_PER_BRACKET: usize = MAX_RATE_LEVEL as usize + 2;

/// Lower bracket bounds in cents before scaling; the top bracket is unbounded.
pub const DEFAULT_CUTOFFS_CENTS: [i64; NUM_BRACKETS] = [0, 905, 3700, 8235, 15750, 20000, 51000];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaxRate(u8);

impl TaxRate {
    pub const ZERO: TaxRate = TaxRate(0);

    pub fn from_level(level: u8) -> Option<Self> {
        (level <= MAX_RATE_LEVEL).then_some(TaxRate(level))
    }

    /// Accepts only values on the 0.05 grid (to within 1e-9).
    pub fn from_f64(rate: f64) -> Result<Self, ConfigError> {
        let scaled = rate * MAX_RATE_LEVEL as f64;
        let level = scaled.round();
        if (scaled - level).abs() > 1e-9 || !(0.0..=MAX_RATE_LEVEL as f64).contains(&level) {
            return Err(ConfigError::invalid("tax rate", format!("{rate} is not on the 0.05 grid in [0, 1]")));
        }
        Ok(TaxRate(level as u8))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / MAX_RATE_LEVEL as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BracketSetting {
    Rate(TaxRate),
    Keep,
}

impl BracketSetting {
    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            i if i <= MAX_RATE_LEVEL as usize => Some(BracketSetting::Rate(TaxRate(i as u8))),
            i if i == SETTINGS_PER_BRACKET - 1 => Some(BracketSetting::Keep),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            BracketSetting::Rate(r) => r.level() as usize,
            BracketSetting::Keep => SETTINGS_PER_BRACKET - 1,
        }
    }
}

/// Marginal rates over fixed income brackets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxSchedule {
    cutoffs: Vec<Coins>,
    rates: Vec<TaxRate>,
}

impl TaxSchedule {
    /// `cutoffs` are the lower bounds of each bracket, starting at zero and
    /// strictly increasing; the last bracket is unbounded.
    pub fn new(cutoffs: Vec<Coins>, rates: Vec<TaxRate>) -> Result<Self, ConfigError> {
        if cutoffs.is_empty() || cutoffs.len() != rates.len() {
            return Err(ConfigError::invalid("tax schedule", "need one rate per bracket"));
        }
        if cutoffs[0] != Coins::ZERO {
            return Err(ConfigError::invalid("tax schedule", "first cutoff must be zero"));
        }
        if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::invalid("tax schedule", "cutoffs must be strictly increasing"));
        }
        Ok(TaxSchedule { cutoffs, rates })
    }

    /// The fixed seven-bracket table scaled by `scale`, all rates zero.
    pub fn standard(scale: f64) -> Result<Self, ConfigError> {
        let cutoffs = DEFAULT_CUTOFFS_CENTS
            .iter()
            .map(|&c| Coins::from_cents((c as f64 * scale).round() as i64))
            .collect();
        Self::new(cutoffs, vec![TaxRate::ZERO; NUM_BRACKETS])
    }

    pub fn cutoffs(&self) -> &[Coins] {
        &self.cutoffs
    }

    pub fn rates(&self) -> &[TaxRate] {
        &self.rates
    }

    pub fn with_rates(&self, rates: &[TaxRate]) -> Result<Self, ConfigError> {
        Self::new(self.cutoffs.clone(), rates.to_vec())
    }

    /// Applies per-bracket settings; `None` and `Keep` leave a rate unchanged.
    pub fn apply_settings(&mut self, settings: &[Option<BracketSetting>]) {
        for (rate, setting) in self.rates.iter_mut().zip(settings) {
            if let Some(BracketSetting::Rate(r)) = setting {
                *rate = *r;
            }
        }
    }

    /// Tax owed on income `z`, floored to the cent. Non-positive income owes nothing.
    pub fn tax(&self, income: Coins) -> Coins {
        let z = income.cents();
        if z <= 0 {
            return Coins::ZERO;
        }
        let mut weighted: i128 = 0;
        for (j, (&lower, rate)) in self.cutoffs.iter().zip(&self.rates).enumerate() {
            let lower = lower.cents();
            if z <= lower {
                break;
            }
            let upper = self.cutoffs.get(j + 1).map_or(z, |c| c.cents().min(z));
            weighted += rate.level() as i128 * (upper - lower) as i128;
        }
        Coins::from_cents((weighted / MAX_RATE_LEVEL as i128) as i64)
    }

    /// Rate of the bracket containing `z` (the first bracket for `z <= 0`).
    pub fn marginal_rate(&self, income: Coins) -> TaxRate {
        let idx = self.cutoffs.iter().rposition(|&lower| income > lower).unwrap_or(0);
        self.rates[idx]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispositionMode {
    Redistribute,
    #[default]
    Invest,
}

impl std::str::FromStr for DispositionMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "redistribute" => Ok(DispositionMode::Redistribute),
            "invest" => Ok(DispositionMode::Invest),
            other => Err(ConfigError::invalid("disposition", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Disposition {
    Redistributed { shares: Vec<Coins> },
    Invested { forwarded: Coins },
}

impl Disposition {
    pub fn total(&self) -> Coins {
        match self {
            Disposition::Redistributed { shares } => shares.iter().sum(),
            Disposition::Invested { forwarded } => *forwarded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodLedger {
    pub period: u32,
    pub schedule: TaxSchedule,
    pub coin_start: Vec<Coins>,
    pub income: Vec<Coins>,
    pub tax: Vec<Coins>,
    pub revenue: Coins,
    pub disposition: Option<Disposition>,
}

/// Opens a tax period with `schedule` frozen and endowments recorded.
pub fn begin_period(period: u32, schedule: TaxSchedule, agents: &[AgentState]) -> PeriodLedger {
    PeriodLedger {
        period,
        schedule,
        coin_start: agents.iter().map(AgentState::total_coin).collect(),
        income: Vec::new(),
        tax: Vec::new(),
        revenue: Coins::ZERO,
        disposition: None,
    }
}

/// Deducts each agent's tax on its period income. Bids are cancelled
/// (newest first) when escrow leaves too little free coin to pay.
pub fn collect_taxes(ledger: &mut PeriodLedger, agents: &mut [AgentState], market: &mut Market) -> Vec<Order> {
    let mut cancelled = Vec::new();
    ledger.income.clear();
    ledger.tax.clear();
    ledger.revenue = Coins::ZERO;
    for i in 0..agents.len() {
        let income = agents[i].total_coin() - ledger.coin_start[i];
        let tax = ledger.schedule.tax(income);
        if agents[i].coin < tax {
            cancelled.extend(market.cancel_bids_to_cover(agents, i, tax));
        }
        agents[i].coin -= tax;
        ledger.income.push(income);
        ledger.tax.push(tax);
        ledger.revenue += tax;
    }
    cancelled
}

/// Splits revenue evenly in cents; leftover cents go to the lowest ids.
pub fn redistribution_shares(revenue: Coins, n: usize) -> Vec<Coins> {
    let n_i = n as i64;
    let base = revenue.cents().div_euclid(n_i);
    let extra = revenue.cents().rem_euclid(n_i) as usize;
    (0..n)
        .map(|i| Coins::from_cents(base + i64::from(i < extra)))
        .collect()
}

pub fn dispose_revenue(ledger: &mut PeriodLedger, mode: DispositionMode, agents: &mut [AgentState]) -> Disposition {
    let disposition = match mode {
        DispositionMode::Redistribute => {
            let shares = redistribution_shares(ledger.revenue, agents.len());
            for (a, s) in agents.iter_mut().zip(&shares) {
                a.coin += *s;
            }
            Disposition::Redistributed { shares }
        }
        DispositionMode::Invest => Disposition::Invested {
            forwarded: ledger.revenue,
        },
    };
    ledger.disposition = Some(disposition.clone());
    disposition
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Role;
    use crate::config::MarketParams;
    use crate::units::Multiplier;
    use proptest::prelude::*;

    fn rate(x: f64) -> TaxRate {
        TaxRate::from_f64(x).unwrap()
    }

    fn whole(v: i64) -> Coins {
        Coins::from_whole(v)
    }

    #[test]
    fn zero_income_pays_nothing() {
        let s = TaxSchedule::standard(1.0).unwrap().with_rates(&[rate(0.5); 7]).unwrap();
        assert_eq!(s.tax(Coins::ZERO), Coins::ZERO);
        assert_eq!(s.tax(whole(-40)), Coins::ZERO);
    }

    #[test]
    fn flat_tax() {
        let s = TaxSchedule::new(vec![Coins::ZERO], vec![rate(0.1)]).unwrap();
        assert_eq!(s.tax(whole(50)), whole(5));
    }

    #[test]
    fn three_bracket_example() {
        let s = TaxSchedule::new(vec![whole(0), whole(10), whole(20)], vec![rate(0.1), rate(0.2), rate(0.5)]).unwrap();
        assert_eq!(s.tax(whole(25)), Coins::from_cents(550));
        assert_eq!(s.marginal_rate(whole(25)), rate(0.5));
        assert_eq!(s.marginal_rate(whole(10)), rate(0.1));
        assert_eq!(s.marginal_rate(Coins::from_cents(1001)), rate(0.2));
        assert_eq!(s.marginal_rate(Coins::ZERO), rate(0.1));
    }

    #[test]
    fn malformed_schedules_rejected() {
        assert!(TaxSchedule::new(vec![whole(1)], vec![rate(0.1)]).is_err());
        assert!(TaxSchedule::new(vec![whole(0), whole(0)], vec![rate(0.1); 2]).is_err());
        assert!(TaxSchedule::new(vec![whole(0)], vec![]).is_err());
        assert!(TaxRate::from_f64(0.07).is_err());
        assert!(TaxRate::from_f64(1.05).is_err());
    }

    #[test]
    fn settings_grid_has_22_entries() {
        let all: Vec<_> = (0..SETTINGS_PER_BRACKET).map(|i| BracketSetting::from_index(i).unwrap()).collect();
        assert_eq!(all.len(), 22);
        assert_eq!(all[21], BracketSetting::Keep);
        assert_eq!(all[20], BracketSetting::Rate(rate(1.0)));
        assert!(BracketSetting::from_index(22).is_none());
        for (i, s) in all.iter().enumerate() {
            assert_eq!(s.index(), i);
        }
    }

    #[test]
    fn keep_setting_preserves_rate() {
        let mut s = TaxSchedule::standard(1.0).unwrap().with_rates(&[rate(0.3); 7]).unwrap();
        let mut settings = vec![Some(BracketSetting::Keep); 7];
        settings[2] = Some(BracketSetting::Rate(rate(0.9)));
        settings[4] = None;
        s.apply_settings(&settings);
        assert_eq!(s.rates()[2], rate(0.9));
        assert_eq!(s.rates()[4], rate(0.3));
        assert_eq!(s.rates()[0], rate(0.3));
    }

    fn agents(coins: &[i64]) -> Vec<AgentState> {
        coins
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut a = AgentState::new(i, Role::Expert, (0, i), Multiplier::from_milli(1200), 0.0);
                a.coin = whole(c);
                a
            })
            .collect()
    }

    #[test]
    fn flat_collection_and_redistribution() {
        let flat = TaxSchedule::standard(1.0).unwrap().with_rates(&[rate(0.1); 7]).unwrap();
        let mut ag = agents(&[0, 0]);
        let mut ledger = begin_period(0, flat, &ag);
        ag[0].coin = whole(50);
        let mut market = Market::new(MarketParams::default());
        collect_taxes(&mut ledger, &mut ag, &mut market);
        assert_eq!(ledger.revenue, whole(5));
        assert_eq!(ledger.tax, vec![whole(5), Coins::ZERO]);
        assert_eq!(ag[0].coin, whole(45));
        let before: Coins = ag.iter().map(|a| a.coin).sum();
        let d = dispose_revenue(&mut ledger, DispositionMode::Redistribute, &mut ag);
        assert_eq!(d.total(), whole(5));
        let after: Coins = ag.iter().map(|a| a.coin).sum();
        assert_eq!(before + whole(5), after);
        assert_eq!(ag[1].coin, Coins::from_cents(250));
    }

    #[test]
    fn uniform_incomes_net_to_zero_under_redistribution() {
        let s = TaxSchedule::standard(1.0).unwrap().with_rates(&[rate(0.25); 7]).unwrap();
        let mut ag = agents(&[0; 6]);
        let mut ledger = begin_period(0, s, &ag);
        for a in ag.iter_mut() {
            a.coin = whole(40);
        }
        let mut market = Market::new(MarketParams::default());
        collect_taxes(&mut ledger, &mut ag, &mut market);
        dispose_revenue(&mut ledger, DispositionMode::Redistribute, &mut ag);
        assert!(ag.iter().all(|a| a.coin == whole(40)));
    }

    #[test]
    fn redistribute_six_among_six() {
        assert_eq!(redistribution_shares(whole(6), 6), vec![whole(1); 6]);
        let uneven = redistribution_shares(Coins::from_cents(7), 3);
        assert_eq!(uneven.iter().sum::<Coins>(), Coins::from_cents(7));
        assert_eq!(uneven[0], Coins::from_cents(3));
    }

    #[test]
    fn invest_forwards_everything() {
        let s = TaxSchedule::standard(1.0).unwrap().with_rates(&[rate(0.2); 7]).unwrap();
        let mut ag = agents(&[0, 0, 0]);
        let mut ledger = begin_period(0, s, &ag);
        ag[1].coin = whole(30);
        let mut market = Market::new(MarketParams::default());
        collect_taxes(&mut ledger, &mut ag, &mut market);
        let d = dispose_revenue(&mut ledger, DispositionMode::Invest, &mut ag);
        assert_eq!(d, Disposition::Invested { forwarded: ledger.revenue });
        assert_eq!(ag.iter().map(|a| a.coin).sum::<Coins>(), whole(30) - ledger.revenue);
    }

    #[test]
    fn escrowed_bids_are_cancelled_to_pay_tax() {
        use crate::market::Side;
        use crate::rng::{substream, Stream};
        use crate::units::{Labor, Resource};
        let s = TaxSchedule::new(vec![Coins::ZERO], vec![rate(1.0)]).unwrap();
        let mut ag = agents(&[0]);
        let mut ledger = begin_period(0, s, &ag);
        ag[0].coin = whole(10);
        let mut market = Market::new(MarketParams::default());
        let mut rng = substream(0, Stream::Market, 0);
        market.place_order(&mut ag, 0, Resource::Wood, Side::Bid, 9, 0, Labor::ZERO, &mut rng).unwrap();
        let cancelled = collect_taxes(&mut ledger, &mut ag, &mut market);
        assert_eq!(cancelled.len(), 1);
        assert_eq!(ag[0].coin, Coins::ZERO);
        assert_eq!(ag[0].escrow_coin, Coins::ZERO);
    }

    fn schedule_strategy() -> impl Strategy<Value = TaxSchedule> {
        (
            proptest::collection::btree_set(1i64..100_000, 0..7),
            proptest::collection::vec(0u8..=MAX_RATE_LEVEL, 7),
        )
            .prop_map(|(cuts, levels)| {
                let mut cutoffs = vec![Coins::ZERO];
                cutoffs.extend(cuts.into_iter().map(Coins::from_cents));
                let rates = levels[..cutoffs.len()].iter().map(|&l| TaxRate(l)).collect();
                TaxSchedule::new(cutoffs, rates).unwrap()
            })
    }

    proptest! {
        #[test]
        fn tax_is_monotone_bounded_and_continuous(s in schedule_strategy(), z in 0i64..200_000) {
            let t = s.tax(Coins::from_cents(z));
            let t_next = s.tax(Coins::from_cents(z + 1));
            prop_assert!(t <= Coins::from_cents(z));
            prop_assert!(t <= t_next);
            // One extra cent adds at most one cent of tax before flooring.
            prop_assert!((t_next - t).cents() <= 1);
        }
    }
}
