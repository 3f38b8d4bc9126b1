//! Number types shared by the exact and floating code paths.
//!
//! Every distribution and value-function routine is generic over [`Scalar`].
//! [`Rational`] is the default and the only mode in which ties are reported;
//! `f64` exists for profiling larger horizons.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::ParseError;

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + PartialOrd
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    /// True when equality comparisons are meaningful (no rounding).
    const EXACT: bool;

    fn from_rational(r: &Rational) -> Self;
    /// For the exact type this is the exact binary expansion of `x`.
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn as_rational(&self) -> Option<&Rational>;
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite reward value")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn as_rational(&self) -> Option<&Rational> {
        Some(self)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn as_rational(&self) -> Option<&Rational> {
        None
    }
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"a/b"` or an integer. Decimal notation is rejected: probabilities
/// must be given exactly.
pub fn parse_rational(text: &str) -> Result<Rational, ParseError> {
    let text = text.trim();
    let bad = || ParseError::Rational(text.to_string());
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

/// Like [`parse_rational`] but also accepts decimal literals, converted
/// exactly from their decimal digits (`"0.25"` is `1/4`). Used for reward
/// parameters, never for probabilities.
pub fn parse_rational_or_decimal(text: &str) -> Result<Rational, ParseError> {
    let text = text.trim();
    if let Ok(r) = parse_rational(text) {
        return Ok(r);
    }
    let bad = || ParseError::Rational(text.to_string());
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (whole, frac) = body.split_once('.').ok_or_else(bad)?;
    if frac.is_empty() && whole.is_empty() {
        return Err(bad());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{}{}", if whole.is_empty() { "0" } else { whole }, frac)
        .parse()
        .map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = Rational::new(digits, den);
    Ok(if neg { -r } else { r })
}

/// Canonical `"a/b"` text (or `"a"` for integers).
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn is_probability(p: &Rational) -> bool {
    p.is_positive() && *p < Rational::one()
}
