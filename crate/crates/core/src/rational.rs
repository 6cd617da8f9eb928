//! Exact rational numbers with a single canonical text rendering.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest denominator rendered as `p/q`; larger denominators render as an
/// exact decimal when the expansion terminates.
pub const MAX_FRACTION_DENOMINATOR: i64 = 64;

/// A reduced fraction with a positive denominator.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational(Ratio<i64>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Builds `numerator / denominator`, reducing to lowest terms.
    pub fn new(numerator: i64, denominator: i64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::structural("zero denominator"));
        }
        if numerator == i64::MIN || denominator == i64::MIN {
            return Err(Error::Overflow);
        }
        Ok(Rational(Ratio::new(numerator, denominator)))
    }

    pub fn integer(n: i64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Integer part rounded toward negative infinity.
    pub fn floor(&self) -> i64 {
        *self.0.floor().numer()
    }

    pub fn checked_add(&self, other: &Rational) -> Result<Rational> {
        self.0.checked_add(&other.0).map(Rational).ok_or(Error::Overflow)
    }

    pub fn checked_sub(&self, other: &Rational) -> Result<Rational> {
        self.0.checked_sub(&other.0).map(Rational).ok_or(Error::Overflow)
    }

    pub fn checked_mul(&self, other: &Rational) -> Result<Rational> {
        self.0.checked_mul(&other.0).map(Rational).ok_or(Error::Overflow)
    }

    pub fn checked_div(&self, other: &Rational) -> Result<Rational> {
        if other.is_zero() {
            return Err(Error::structural("division by zero"));
        }
        num_traits::CheckedDiv::checked_div(&self.0, &other.0)
            .map(Rational)
            .ok_or(Error::Overflow)
    }

    /// Parses a decimal digit string with an optional fractional part, e.g.
    /// `"1234"`, `"0.125"`, `".5"`. No sign, no separators.
    pub(crate) fn from_decimal_digits(int_part: &str, frac_part: &str) -> Result<Rational> {
        let mut numer: i64 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            if !b.is_ascii_digit() {
                return Err(Error::InvalidRational(format!("{int_part}.{frac_part}")));
            }
            numer = numer
                .checked_mul(10)
                .and_then(|n| n.checked_add(i64::from(b - b'0')))
                .ok_or(Error::Overflow)?;
        }
        let exp = u32::try_from(frac_part.len()).map_err(|_| Error::Overflow)?;
        let denom = 10i64.checked_pow(exp).ok_or(Error::Overflow)?;
        Rational::new(numer, denom)
    }

    fn terminating_decimal(&self) -> Option<String> {
        let mut d = self.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        if d != 1 {
            return None;
        }
        let digits = twos.max(fives);
        let scale = 10i128.checked_pow(digits)?;
        let scaled = i128::from(self.numer()) * scale / i128::from(self.denom());
        let sign = if scaled < 0 { "-" } else { "" };
        let scaled = scaled.unsigned_abs();
        let scale = scale as u128;
        let int_part = scaled / scale;
        let frac_part = scaled % scale;
        Some(format!(
            "{sign}{int_part}.{frac_part:0width$}",
            width = digits as usize
        ))
    }
}

impl fmt::Display for Rational {
    /// Canonical rendering: integers as digits, small denominators as `p/q`,
    /// other terminating values as an exact decimal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            return write!(f, "{}", self.numer());
        }
        if self.denom() <= MAX_FRACTION_DENOMINATOR {
            return write!(f, "{}/{}", self.numer(), self.denom());
        }
        match self.terminating_decimal() {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.numer(), self.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rational({self})")
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `"2"`, `"-3/2"`, `"1.5"`, `"+.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidRational(s.to_string());
        let t = s.trim();
        let (negative, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        if body.is_empty() {
            return Err(bad());
        }
        let value = if let Some((n, d)) = body.split_once('/') {
            if n.is_empty() || d.is_empty() || !n.bytes().chain(d.bytes()).all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let n = Rational::from_decimal_digits(n, "")?;
            let d = Rational::from_decimal_digits(d, "")?;
            if d.is_zero() {
                return Err(bad());
            }
            n.checked_div(&d)?
        } else {
            let (i, fr) = body.split_once('.').unwrap_or((body, ""));
            if (i.is_empty() && fr.is_empty()) || (body.contains('.') && fr.is_empty()) {
                return Err(bad());
            }
            Rational::from_decimal_digits(i, fr).map_err(|e| match e {
                Error::Overflow => Error::Overflow,
                _ => bad(),
            })?
        };
        Ok(if negative { Rational(-value.0) } else { value })
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::integer(n)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Greatest common divisor of two non-negative integers.
pub fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn reduces_and_normalizes_sign() {
        let x = Rational::new(3, -6).unwrap();
        assert_eq!(x.numer(), -1);
        assert_eq!(x.denom(), 2);
        assert_eq!(x.to_string(), "-1/2");
    }

    #[test]
    fn renders_canonically() {
        assert_eq!(r("64").to_string(), "64");
        assert_eq!(r("3/6").to_string(), "1/2");
        assert_eq!(r("0.5").to_string(), "1/2");
        assert_eq!(r("1.2345").to_string(), "1.2345");
        assert_eq!(r("-0.015").to_string(), "-0.015");
        assert_eq!(r("1/64").to_string(), "1/64");
        assert_eq!(r("7/127").to_string(), "7/127");
        assert_eq!(r("2.50").to_string(), "5/2");
    }

    #[test]
    fn parse_accepts_documented_forms() {
        assert_eq!(r("3/2"), r("1.5"));
        assert_eq!(r("2"), Rational::integer(2));
        assert_eq!(r(".25"), Rational::new(1, 4).unwrap());
        assert_eq!(r("+4"), Rational::integer(4));
        for bad in ["", "-", "1/0", "a", "1.", "1/2/3", "1.5/2", "/3"] {
            assert!(bad.parse::<Rational>().is_err(), "{bad}");
        }
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(Rational::new(1, 0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!("99999999999999999999".parse::<Rational>(), Err(Error::Overflow)));
    }

    proptest! {
        #[test]
        fn rendering_round_trips(n in -100_000i64..100_000, d in 1i64..5000) {
            let x = Rational::new(n, d).unwrap();
            let back: Rational = x.to_string().parse().unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn equal_values_render_identically(n in -1000i64..1000, d in 1i64..200, k in 1i64..50) {
            let a = Rational::new(n, d).unwrap();
            let b = Rational::new(n * k, d * k).unwrap();
            prop_assert_eq!(a.to_string(), b.to_string());
            prop_assert_eq!(gcd(a.numer().abs(), a.denom()), 1);
        }
    }
}
