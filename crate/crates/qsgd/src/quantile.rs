use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// A rational quantile level τ = p/q with coprime positive integers, 0 < p < q.
///
/// The rational form matters: with a constant learning rate η every SGD step
/// moves the iterate by +τη or −(1−τ)η, so all reachable points differ from
/// the start by integer multiples of η/q. That lattice is what makes the exact
/// Markov-chain analysis in [`crate::oracle`] possible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RationalQuantile {
    numer: u32,
    denom: u32,
}

impl RationalQuantile {
    pub fn new(numer: u32, denom: u32) -> Result<Self> {
        if numer == 0 || numer >= denom || gcd(numer, denom) != 1 {
            return Err(Error::InvalidQuantile { p: numer, q: denom });
        }
        Ok(Self { numer, denom })
    }

    /// Numerator p.
    pub fn numer(&self) -> u32 {
        self.numer
    }

    /// Denominator q; also the period of the induced Markov chain and the
    /// number of its cyclic classes.
    pub fn denom(&self) -> u32 {
        self.denom
    }

    /// The level τ = p/q as a float.
    pub fn value(&self) -> f64 {
        f64::from(self.numer) / f64::from(self.denom)
    }

    /// Lattice spacing η/q of the reachable set for learning rate η.
    pub fn spacing(&self, learning_rate: f64) -> f64 {
        learning_rate / f64::from(self.denom)
    }

    /// Lattice units moved on an upward step (sample above the iterate).
    pub fn up_step(&self) -> i64 {
        i64::from(self.numer)
    }

    /// Lattice units moved on a downward step; always negative.
    pub fn down_step(&self) -> i64 {
        i64::from(self.numer) - i64::from(self.denom)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for RationalQuantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl FromStr for RationalQuantile {
    type Err = Error;

    /// Parses `p/q`, e.g. `3/4`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse quantile level {s:?}"));
        let (p, q) = s.split_once('/').ok_or_else(bad)?;
        let p = p.trim().parse::<u32>().map_err(|_| bad())?;
        let q = q.trim().parse::<u32>().map_err(|_| bad())?;
        Self::new(p, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_coprime_rejects_otherwise() {
        assert!(RationalQuantile::new(1, 2).is_ok());
        assert!(RationalQuantile::new(3, 4).is_ok());
        assert!(RationalQuantile::new(2, 4).is_err()); // not coprime
        assert!(RationalQuantile::new(4, 3).is_err()); // p >= q
        assert!(RationalQuantile::new(0, 3).is_err());
        assert!(RationalQuantile::new(3, 3).is_err());
    }

    #[test]
    fn step_arithmetic() {
        let tau = RationalQuantile::new(3, 4).unwrap();
        assert_eq!(tau.up_step(), 3);
        assert_eq!(tau.down_step(), -1);
        assert_eq!(tau.value(), 0.75);
        assert_eq!(tau.spacing(0.01), 0.0025);
    }

    #[test]
    fn parses_fraction_syntax() {
        assert_eq!(
            "3/4".parse::<RationalQuantile>().unwrap(),
            RationalQuantile::new(3, 4).unwrap()
        );
        assert!("0.75".parse::<RationalQuantile>().is_err());
        assert!("4/4".parse::<RationalQuantile>().is_err());
    }
}
