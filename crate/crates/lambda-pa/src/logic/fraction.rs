//! Exact rational permission amounts in (0, 1].
//!
//! A full fraction (1) permits writes and deallocation; any positive
//! fraction permits reads. Shared borrowing halves a fraction, ending a
//! borrow adds it back, so equality must be decidable exactly: values are
//! arbitrary-precision rationals kept in lowest terms, never floats.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FractionError {
    #[error("fraction out of range: {0} does not lie in (0, 1]")]
    OutOfRange(String),
    #[error("fraction sum exceeds 1: {0}")]
    Overflow(String),
}

/// A permission amount q with 0 < q <= 1, stored in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fraction(BigRational);

impl Fraction {
    /// The full permission, 1.
    pub fn one() -> Fraction {
        Fraction(BigRational::one())
    }

    /// Builds `num/den`, reduced; errors unless 0 < num/den <= 1.
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Result<Fraction, FractionError> {
        let num = num.into();
        let den = den.into();
        if den == BigInt::from(0) {
            return Err(FractionError::OutOfRange(format!("{num}/0")));
        }
        let r = BigRational::new(num, den);
        if r.is_positive() && r <= BigRational::one() {
            Ok(Fraction(r))
        } else {
            Err(FractionError::OutOfRange(r.to_string()))
        }
    }

    /// Half of this fraction, in lowest terms. Always representable:
    /// halving keeps the value inside (0, 1].
    pub fn half(&self) -> Fraction {
        Fraction(&self.0 / BigRational::from_integer(2.into()))
    }

    /// `self + other` when the sum stays within 1; an overflowing sum
    /// means fraction conservation was violated somewhere upstream.
    pub fn checked_add(&self, other: &Fraction) -> Result<Fraction, FractionError> {
        let sum = &self.0 + &other.0;
        if sum <= BigRational::one() {
            Ok(Fraction(sum))
        } else {
            Err(FractionError::Overflow(sum.to_string()))
        }
    }

    /// `self - other` when strictly positive; `None` when `other >= self`.
    pub fn checked_sub(&self, other: &Fraction) -> Option<Fraction> {
        if other < self {
            Some(Fraction(&self.0 - &other.0))
        } else {
            None
        }
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Fraction {
    type Err = FractionError;

    /// Parses `"a/b"` or `"a"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |_| FractionError::OutOfRange(s.to_string());
        match s.split_once('/') {
            Some((n, d)) => Fraction::new(
                n.trim().parse::<BigInt>().map_err(bad)?,
                d.trim().parse::<BigInt>().map_err(bad)?,
            ),
            None => Fraction::new(s.trim().parse::<BigInt>().map_err(bad)?, 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    #[test]
    fn halving_one_gives_half_then_quarter() {
        assert_eq!(Fraction::one().half(), frac("1/2"));
        assert_eq!(frac("1/2").half(), frac("1/4"));
    }

    #[test]
    fn halving_reduces_to_lowest_terms() {
        assert_eq!(frac("2/3").half(), frac("1/3"));
    }

    #[test]
    fn add_recombines_halves() {
        assert_eq!(frac("1/2").checked_add(&frac("1/4")).unwrap(), frac("3/4"));
        assert_eq!(frac("3/4").checked_add(&frac("1/4")).unwrap(), Fraction::one());
    }

    #[test]
    fn add_over_one_overflows() {
        assert!(matches!(
            frac("3/4").checked_add(&frac("1/2")),
            Err(FractionError::Overflow(_))
        ));
    }

    #[test]
    fn construction_enforces_range() {
        assert!(Fraction::new(0, 1).is_err());
        assert!(Fraction::new(3, 2).is_err());
        assert!(Fraction::new(-1, 2).is_err());
        assert!(Fraction::new(1, 0).is_err());
        assert_eq!(Fraction::new(2, 4).unwrap(), frac("1/2"));
    }

    #[test]
    fn sub_is_exact_and_partial() {
        assert_eq!(Fraction::one().checked_sub(&frac("1/4")).unwrap(), frac("3/4"));
        assert_eq!(frac("1/2").checked_sub(&frac("1/2")), None);
        assert_eq!(frac("1/4").checked_sub(&frac("1/2")), None);
    }

    #[test]
    fn display_drops_unit_denominator() {
        assert_eq!(Fraction::one().to_string(), "1");
        assert_eq!(frac("3/4").to_string(), "3/4");
    }
}
