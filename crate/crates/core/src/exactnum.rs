//! Exact extended rationals.
//!
//! Two number types live here. [`ExtScalar`] holds nonnegative traces and
//! may be `+inf`. [`DimValue`] holds signed dimension values and adds `-inf`
//! together with an absorbing `Undefined` state for `inf - inf`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

pub type Rational = BigRational;

/// Builds `num/den` in lowest terms. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumError {
    #[error("malformed rational `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("negative value `{0}` where a trace is expected")]
    Negative(String),
}

/// Serializes a rational as its lowest-terms `p/q` string.
pub fn ser_rational<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

pub fn ser_rationals<S: Serializer>(rs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(rs.iter().map(ToString::to_string))
}

pub fn ser_rational_matrix<S: Serializer>(rows: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(rows.iter().map(|r| r.iter().map(ToString::to_string).collect::<Vec<_>>()))
}

/// Parses `p`, `p/q` or `-p/q` into a rational in lowest terms.
pub fn parse_rational(s: &str) -> Result<Rational, NumError> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n = BigInt::from_str(num).map_err(|_| NumError::Malformed(s.to_string()))?;
    let d = BigInt::from_str(den).map_err(|_| NumError::Malformed(s.to_string()))?;
    if d.is_zero() {
        return Err(NumError::ZeroDenominator(s.to_string()));
    }
    Ok(Rational::new(n, d))
}

/// A nonnegative rational or `+inf`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtScalar {
    Finite(Rational),
    Infinity,
}

impl ExtScalar {
    pub fn zero() -> Self {
        ExtScalar::Finite(Rational::zero())
    }

    pub fn one() -> Self {
        ExtScalar::Finite(Rational::one())
    }

    /// Wraps a rational, rejecting negative values.
    pub fn new(r: Rational) -> Result<Self, NumError> {
        if r.is_negative() {
            Err(NumError::Negative(r.to_string()))
        } else {
            Ok(ExtScalar::Finite(r))
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        ExtScalar::new(rat(num, den)).expect("nonnegative literal")
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtScalar::Infinity)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ExtScalar::Finite(r) if r.is_zero())
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ExtScalar::Finite(r) => Some(r),
            ExtScalar::Infinity => None,
        }
    }

    /// Multiplies by a finite nonnegative rational. `inf * 0` is taken as 0
    /// (an empty sum of infinite blocks).
    pub fn scale(&self, c: &Rational) -> Self {
        match self {
            ExtScalar::Finite(r) => ExtScalar::Finite(r * c),
            ExtScalar::Infinity if c.is_zero() => ExtScalar::zero(),
            ExtScalar::Infinity => ExtScalar::Infinity,
        }
    }

    pub fn square(&self) -> Self {
        match self {
            ExtScalar::Finite(r) => ExtScalar::Finite(r * r),
            ExtScalar::Infinity => ExtScalar::Infinity,
        }
    }

    /// `self - other` when that is a well defined nonnegative value.
    pub fn checked_sub(&self, other: &ExtScalar) -> Option<ExtScalar> {
        match (self, other) {
            (ExtScalar::Finite(a), ExtScalar::Finite(b)) if a >= b => Some(ExtScalar::Finite(a - b)),
            (ExtScalar::Infinity, ExtScalar::Finite(_)) => Some(ExtScalar::Infinity),
            _ => None,
        }
    }

    pub fn to_dim(&self) -> DimValue {
        match self {
            ExtScalar::Finite(r) => DimValue::Finite(r.clone()),
            ExtScalar::Infinity => DimValue::PosInf,
        }
    }
}

/// Exact sum; `+inf` absorbs.
pub fn ext_add(a: &ExtScalar, b: &ExtScalar) -> ExtScalar {
    match (a, b) {
        (ExtScalar::Finite(x), ExtScalar::Finite(y)) => ExtScalar::Finite(x + y),
        _ => ExtScalar::Infinity,
    }
}

impl Add for ExtScalar {
    type Output = ExtScalar;
    fn add(self, rhs: ExtScalar) -> ExtScalar {
        ext_add(&self, &rhs)
    }
}

impl<'a> Add<&'a ExtScalar> for &'a ExtScalar {
    type Output = ExtScalar;
    fn add(self, rhs: &ExtScalar) -> ExtScalar {
        ext_add(self, rhs)
    }
}

impl std::iter::Sum for ExtScalar {
    fn sum<I: Iterator<Item = ExtScalar>>(iter: I) -> ExtScalar {
        iter.fold(ExtScalar::zero(), |acc, x| acc + x)
    }
}

impl Ord for ExtScalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtScalar::Finite(a), ExtScalar::Finite(b)) => a.cmp(b),
            (ExtScalar::Finite(_), ExtScalar::Infinity) => Ordering::Less,
            (ExtScalar::Infinity, ExtScalar::Finite(_)) => Ordering::Greater,
            (ExtScalar::Infinity, ExtScalar::Infinity) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<Rational> for ExtScalar {
    /// Panics on negative input; use [`ExtScalar::new`] for fallible conversion.
    fn from(r: Rational) -> Self {
        ExtScalar::new(r).expect("trace must be nonnegative")
    }
}

impl fmt::Display for ExtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtScalar::Finite(r) => write!(f, "{r}"),
            ExtScalar::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for ExtScalar {
    type Err = NumError;
    fn from_str(s: &str) -> Result<Self, NumError> {
        match s.trim() {
            "inf" | "+inf" => Ok(ExtScalar::Infinity),
            other => ExtScalar::new(parse_rational(other)?),
        }
    }
}

impl Serialize for ExtScalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// A signed extended rational with an explicit undefined state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DimValue {
    Finite(Rational),
    PosInf,
    NegInf,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DimOp {
    Add,
    Sub,
    /// Multiplies the left operand by the square of the right operand,
    /// which must be finite.
    ScaleBySquare,
}

/// Total extended arithmetic. Conflicting infinities and any `Undefined`
/// operand give `Undefined`.
pub fn dim_combine(a: &DimValue, b: &DimValue, op: DimOp) -> DimValue {
    use DimValue::*;
    match op {
        DimOp::Add => match (a, b) {
            (Undefined, _) | (_, Undefined) => Undefined,
            (Finite(x), Finite(y)) => Finite(x + y),
            (PosInf, NegInf) | (NegInf, PosInf) => Undefined,
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
        },
        DimOp::Sub => dim_combine(a, &b.negated(), DimOp::Add),
        DimOp::ScaleBySquare => match (a, b) {
            (Undefined, _) | (_, Undefined) => Undefined,
            (_, PosInf) | (_, NegInf) => Undefined,
            (Finite(x), Finite(c)) => Finite(x * c * c),
            (_, Finite(c)) if c.is_zero() => Undefined,
            (inf, Finite(_)) => inf.clone(),
        },
    }
}

impl DimValue {
    pub fn zero() -> Self {
        DimValue::Finite(Rational::zero())
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self, DimValue::Undefined)
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            DimValue::Finite(r) => Some(r),
            _ => None,
        }
    }

    pub fn negated(&self) -> DimValue {
        match self {
            DimValue::Finite(r) => DimValue::Finite(-r),
            DimValue::PosInf => DimValue::NegInf,
            DimValue::NegInf => DimValue::PosInf,
            DimValue::Undefined => DimValue::Undefined,
        }
    }

    pub fn scale_by_square(&self, c: &Rational) -> DimValue {
        dim_combine(self, &DimValue::Finite(c.clone()), DimOp::ScaleBySquare)
    }
}

impl Add for DimValue {
    type Output = DimValue;
    fn add(self, rhs: DimValue) -> DimValue {
        dim_combine(&self, &rhs, DimOp::Add)
    }
}

impl Sub for DimValue {
    type Output = DimValue;
    fn sub(self, rhs: DimValue) -> DimValue {
        dim_combine(&self, &rhs, DimOp::Sub)
    }
}

impl Neg for DimValue {
    type Output = DimValue;
    fn neg(self) -> DimValue {
        self.negated()
    }
}

impl Mul<&Rational> for DimValue {
    type Output = DimValue;
    /// Plain scalar multiple; `inf * 0` is `Undefined`.
    fn mul(self, c: &Rational) -> DimValue {
        match self {
            DimValue::Finite(x) => DimValue::Finite(x * c),
            DimValue::Undefined => DimValue::Undefined,
            _ if c.is_zero() => DimValue::Undefined,
            DimValue::PosInf if c.is_positive() => DimValue::PosInf,
            DimValue::PosInf => DimValue::NegInf,
            DimValue::NegInf if c.is_positive() => DimValue::NegInf,
            DimValue::NegInf => DimValue::PosInf,
        }
    }
}

impl std::iter::Sum for DimValue {
    fn sum<I: Iterator<Item = DimValue>>(iter: I) -> DimValue {
        iter.fold(DimValue::zero(), |acc, x| acc + x)
    }
}

impl From<Rational> for DimValue {
    fn from(r: Rational) -> Self {
        DimValue::Finite(r)
    }
}

impl fmt::Display for DimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimValue::Finite(r) => write!(f, "{r}"),
            DimValue::PosInf => f.write_str("inf"),
            DimValue::NegInf => f.write_str("-inf"),
            DimValue::Undefined => f.write_str("undef"),
        }
    }
}

impl FromStr for DimValue {
    type Err = NumError;
    fn from_str(s: &str) -> Result<Self, NumError> {
        match s.trim() {
            "inf" | "+inf" => Ok(DimValue::PosInf),
            "-inf" => Ok(DimValue::NegInf),
            "undef" => Ok(DimValue::Undefined),
            other => Ok(DimValue::Finite(parse_rational(other)?)),
        }
    }
}

impl Serialize for DimValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}
