//! Minted incomes for building, house trades and skill trades.

use rand::Rng;

use crate::rng::SimRng;
use crate::units::{Coins, Multiplier};

/// Multiplicative jitter applied to every minted income.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Jitter {
    pub low: f64,
    pub high: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter { low: 0.9, high: 1.1 }
    }
}

impl Jitter {
    pub fn draw(&self, rng: &mut SimRng) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.gen_range(self.low..=self.high)
        }
    }
}

/// `fraction * pay_base * multiplier * jitter`, rounded to the cent.
pub fn mint_income(pay_base: Coins, multiplier: Multiplier, fraction: f64, jitter: f64) -> Coins {
    // pay_base (cents) times multiplier (milli) is an exact integer product.
    let exact = (pay_base.cents() * multiplier.milli()) as f64 / Multiplier::SCALE as f64;
    Coins::from_cents((exact * fraction * jitter).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_jitter_matches_formula() {
        let base = Coins::from_whole(10);
        assert_eq!(mint_income(base, Multiplier::from_milli(1300), 1.0, 1.0), Coins::from_whole(13));
        assert_eq!(mint_income(base, Multiplier::from_milli(700), 1.0, 1.0), Coins::from_whole(7));
        assert_eq!(mint_income(base, Multiplier::from_milli(1400), 0.5, 1.0), Coins::from_whole(7));
    }
}
