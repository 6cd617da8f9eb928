//! Solution checking and misconception feedback for linear "spend a total"
//! items: unit prices `c_i`, a total `T`, and non-negative integer counts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{gcd, Rational};

/// Enumeration refuses constraints whose search box exceeds this many tuples.
pub const MAX_CANDIDATES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearConstraint {
    coefficients: Vec<Rational>,
    total: Rational,
}

impl LinearConstraint {
    pub fn new(coefficients: Vec<Rational>, total: Rational) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::structural("constraint needs at least one coefficient"));
        }
        if let Some(c) = coefficients.iter().find(|c| **c <= Rational::ZERO) {
            return Err(Error::structural(format!(
                "coefficient {c} is not positive; the search would be unbounded"
            )));
        }
        Ok(LinearConstraint { coefficients, total })
    }

    pub fn coefficients(&self) -> &[Rational] {
        &self.coefficients
    }

    pub fn total(&self) -> Rational {
        self.total
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `Σ c_i·v_i`.
    pub fn evaluate(&self, values: &[Rational]) -> Result<Rational> {
        if values.len() != self.len() {
            return Err(Error::structural(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        values
            .iter()
            .zip(&self.coefficients)
            .try_fold(Rational::ZERO, |acc, (v, c)| acc.checked_add(&c.checked_mul(v)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnosis {
    Valid,
    /// Spent more than the total, by the given amount.
    Over(Rational),
    Under(Rational),
    /// 0-based positions of values that are not whole numbers.
    NonInteger(Vec<usize>),
    Negative(Vec<usize>),
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[usize]| v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
        match self {
            Diagnosis::Valid => write!(f, "Valid"),
            Diagnosis::Over(a) => write!(f, "Over({a})"),
            Diagnosis::Under(a) => write!(f, "Under({a})"),
            Diagnosis::NonInteger(s) => write!(f, "NonInteger(slots {})", list(s)),
            Diagnosis::Negative(s) => write!(f, "Negative(slots {})", list(s)),
        }
    }
}

/// Checks extracted counts against the constraint. Domain problems
/// (fractional, then negative counts) take precedence over the total.
pub fn check_solution(values: &[Rational], constraint: &LinearConstraint) -> Result<Diagnosis> {
    let spent = constraint.evaluate(values)?;
    let fractional: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_integer()).collect();
    if !fractional.is_empty() {
        return Ok(Diagnosis::NonInteger(fractional));
    }
    let negative: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_negative()).collect();
    if !negative.is_empty() {
        return Ok(Diagnosis::Negative(negative));
    }
    let diff = spent.checked_sub(&constraint.total)?;
    Ok(if diff.is_zero() {
        Diagnosis::Valid
    } else if diff.is_negative() {
        Diagnosis::Under(diff.abs())
    } else {
        Diagnosis::Over(diff)
    })
}

/// All non-negative integer solutions, in lexicographic order.
pub fn enumerate_solutions(constraint: &LinearConstraint) -> Result<Vec<Vec<u64>>> {
    let total = constraint.total;
    if total.is_negative() {
        return Ok(Vec::new());
    }
    let bounds: Vec<u64> = constraint
        .coefficients
        .iter()
        .map(|c| total.checked_div(c).map(|q| q.floor() as u64))
        .collect::<Result<_>>()?;
    let candidates = bounds
        .iter()
        .try_fold(1u128, |acc, b| acc.checked_mul(u128::from(*b) + 1))
        .unwrap_or(u128::MAX);
    if candidates > MAX_CANDIDATES {
        return Err(Error::data(format!(
            "search space of {candidates} tuples exceeds the limit of {MAX_CANDIDATES}"
        )));
    }

    let mut out = Vec::new();
    let mut current = Vec::with_capacity(bounds.len());
    search(&constraint.coefficients, total, &mut current, &mut out)?;
    Ok(out)
}

fn search(coeffs: &[Rational], remaining: Rational, current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) -> Result<()> {
    let Some((c, rest)) = coeffs.split_first() else {
        if remaining.is_zero() {
            out.push(current.clone());
        }
        return Ok(());
    };
    let max = remaining.checked_div(c)?.floor();
    for n in 0..=max.max(-1) {
        let left = remaining.checked_sub(&c.checked_mul(&Rational::integer(n))?)?;
        current.push(n as u64);
        search(rest, left, current, out)?;
        current.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FractionVerdict {
    Exact,
    EquivalentUnsimplified,
    WrongValue,
    ZeroDenominator,
}

/// Compares a stated numerator/denominator pair with the expected fraction.
pub fn diagnose_fraction(expected: Rational, numerator: Rational, denominator: Rational) -> FractionVerdict {
    if denominator.is_zero() {
        return FractionVerdict::ZeroDenominator;
    }
    let Ok(stated) = numerator.checked_div(&denominator) else {
        return FractionVerdict::WrongValue;
    };
    if stated != expected {
        return FractionVerdict::WrongValue;
    }
    let canonical = numerator.is_integer()
        && denominator.is_integer()
        && denominator.numer() > 0
        && gcd(numerator.numer().abs(), denominator.numer()) == 1;
    if canonical {
        FractionVerdict::Exact
    } else {
        FractionVerdict::EquivalentUnsimplified
    }
}
