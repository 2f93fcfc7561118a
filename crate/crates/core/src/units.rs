//! Fixed-point quantities and the small closed vocabularies of the economy.
//!
//! Coins and labor are kept in hundredths and payment multipliers in
//! thousandths so that every ledger identity (tax revenue, redistribution,
//! investment) balances exactly.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

pub type AgentId = usize;

/// Grid coordinate as (row, col).
pub type Pos = (usize, usize);

macro_rules! fixed_point {
    ($(#[$meta:meta])* $name:ident, $scale:expr, $unit:ident, $from_unit:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(i64);

        impl $name {
            pub const ZERO: Self = Self(0);
            pub const SCALE: i64 = $scale;

            pub const fn $from_unit(raw: i64) -> Self {
                Self(raw)
            }

            pub const fn $unit(self) -> i64 {
                self.0
            }

            pub const fn from_whole(whole: i64) -> Self {
                Self(whole * $scale)
            }

            /// Nearest representable value; ties round away from zero.
            pub fn from_f64(value: f64) -> Self {
                Self((value * $scale as f64).round() as i64)
            }

            pub fn as_f64(self) -> f64 {
                self.0 as f64 / $scale as f64
            }

            pub fn is_negative(self) -> bool {
                self.0 < 0
            }

            pub fn max(self, other: Self) -> Self {
                Self(self.0.max(other.0))
            }

            pub fn min(self, other: Self) -> Self {
                Self(self.0.min(other.0))
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: Self) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl SubAssign for $name {
            fn sub_assign(&mut self, rhs: Self) {
                self.0 -= rhs.0;
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Sum for $name {
            fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
                Self(iter.map(|v| v.0).sum())
            }
        }

        impl<'a> Sum<&'a $name> for $name {
            fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
                Self(iter.map(|v| v.0).sum())
            }
        }
    };
}

fixed_point!(
    /// Coin amount in hundredths of a coin.
    Coins,
    100,
    cents,
    from_cents
);

fixed_point!(
    /// Accumulated labor in hundredths of a labor unit.
    Labor,
    100,
    hundredths,
    from_hundredths
);

fixed_point!(
    /// Payment multiplier in thousandths.
    Multiplier,
    1000,
    milli,
    from_milli
);

impl fmt::Display for Coins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Coins {
    pub fn from_price(price: u8) -> Self {
        Self::from_whole(price as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Wood,
    Stone,
    Iron,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Wood, Resource::Stone, Resource::Iron];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Wood => "wood",
            Resource::Stone => "stone",
            Resource::Iron => "iron",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HouseColor {
    Red,
    Blue,
    Green,
}

impl HouseColor {
    pub const ALL: [HouseColor; 3] = [HouseColor::Red, HouseColor::Blue, HouseColor::Green];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// The two resources consumed to build a house of this color.
    pub fn components(self) -> [Resource; 2] {
        match self {
            HouseColor::Red => [Resource::Wood, Resource::Stone],
            HouseColor::Blue => [Resource::Wood, Resource::Iron],
            HouseColor::Green => [Resource::Stone, Resource::Iron],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coins_display_and_rounding() {
        assert_eq!(Coins::from_cents(1234).to_string(), "12.34");
        assert_eq!(Coins::from_cents(-5).to_string(), "-0.05");
        assert_eq!(Coins::from_f64(9.05), Coins::from_cents(905));
        assert_eq!(Multiplier::from_f64(0.7).milli(), 700);
    }

    #[test]
    fn multiplier_steps_are_exact() {
        let mut m = Multiplier::from_milli(700);
        for _ in 0..3 {
            m += Multiplier::from_milli(100);
        }
        assert_eq!(m, Multiplier::from_whole(1));
    }

    #[test]
    fn house_components_cover_each_pair_once() {
        let mut pairs: Vec<_> = HouseColor::ALL.iter().map(|c| c.components()).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 3);
        for [a, b] in pairs {
            assert_ne!(a, b);
        }
    }
}
