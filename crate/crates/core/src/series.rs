//! Index expressions for declared countable families and the asymptotic
//! classification of their series.
//!
//! A family such as `repeat i=1..N: C(1/i)` is stored as a finite truncation;
//! the expressions kept here let us say what happens to sums over the whole
//! family (converges, diverges, or cannot tell).

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::exactnum::Rational;

/// Arithmetic expression in one index variable `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexExpr {
    Num(Rational),
    Var,
    Add(Box<IndexExpr>, Box<IndexExpr>),
    Sub(Box<IndexExpr>, Box<IndexExpr>),
    Mul(Box<IndexExpr>, Box<IndexExpr>),
    Div(Box<IndexExpr>, Box<IndexExpr>),
    Neg(Box<IndexExpr>),
    Pow(Box<IndexExpr>, Box<IndexExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero at i = {0}")]
    DivByZero(i64),
    #[error("exponent must evaluate to an integer at i = {0}")]
    NonIntegerExponent(i64),
    #[error("exponent too large at i = {0}")]
    ExponentTooLarge(i64),
}

fn pow_rat(base: &Rational, exp: i64) -> Option<Rational> {
    if exp.unsigned_abs() > 4096 {
        return None;
    }
    if exp >= 0 {
        Some(num_traits::pow(base.clone(), exp as usize))
    } else if base.is_zero() {
        None
    } else {
        Some(num_traits::pow(base.recip(), exp.unsigned_abs() as usize))
    }
}

impl IndexExpr {
    pub fn num(r: Rational) -> Self {
        IndexExpr::Num(r)
    }

    pub fn eval(&self, i: i64) -> Result<Rational, EvalError> {
        use IndexExpr::*;
        Ok(match self {
            Num(r) => r.clone(),
            Var => Rational::from_integer(BigInt::from(i)),
            Add(a, b) => a.eval(i)? + b.eval(i)?,
            Sub(a, b) => a.eval(i)? - b.eval(i)?,
            Mul(a, b) => a.eval(i)? * b.eval(i)?,
            Div(a, b) => {
                let d = b.eval(i)?;
                if d.is_zero() {
                    return Err(EvalError::DivByZero(i));
                }
                a.eval(i)? / d
            }
            Neg(a) => -a.eval(i)?,
            Pow(a, b) => {
                let e = b.eval(i)?;
                if !e.is_integer() {
                    return Err(EvalError::NonIntegerExponent(i));
                }
                let e = e.to_integer().to_i64().ok_or(EvalError::ExponentTooLarge(i))?;
                pow_rat(&a.eval(i)?, e).ok_or(EvalError::ExponentTooLarge(i))?
            }
        })
    }

    fn is_constant(&self) -> bool {
        use IndexExpr::*;
        match self {
            Num(_) => true,
            Var => false,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.is_constant() && b.is_constant(),
            Neg(a) => a.is_constant(),
        }
    }

    /// `(slope, intercept)` if the expression is affine in `i` with rational
    /// coefficients.
    fn affine(&self) -> Option<(Rational, Rational)> {
        use IndexExpr::*;
        match self {
            Num(r) => Some((Rational::zero(), r.clone())),
            Var => Some((Rational::one(), Rational::zero())),
            Add(a, b) => {
                let (x, y) = (a.affine()?, b.affine()?);
                Some((x.0 + y.0, x.1 + y.1))
            }
            Sub(a, b) => {
                let (x, y) = (a.affine()?, b.affine()?);
                Some((x.0 - y.0, x.1 - y.1))
            }
            Neg(a) => a.affine().map(|(s, c)| (-s, -c)),
            Mul(a, b) => {
                let (x, y) = (a.affine()?, b.affine()?);
                if x.0.is_zero() {
                    Some((&y.0 * &x.1, &y.1 * &x.1))
                } else if y.0.is_zero() {
                    Some((&x.0 * &y.1, &x.1 * &y.1))
                } else {
                    None
                }
            }
            Div(a, b) => {
                let (x, y) = (a.affine()?, b.affine()?);
                if y.0.is_zero() && !y.1.is_zero() {
                    Some((x.0 / &y.1, x.1 / &y.1))
                } else {
                    None
                }
            }
            Pow(..) if self.is_constant() => self.eval(0).ok().map(|c| (Rational::zero(), c)),
            Pow(..) => None,
        }
    }

    /// Leading behaviour as `i -> inf`.
    pub fn asymptotic(&self) -> Asym {
        use IndexExpr::*;
        match self {
            Num(r) if r.is_zero() => Asym::Zero,
            Num(r) => Asym::Term(Term { coef: r.clone(), degree: 0, ratio: Rational::one(), exact: true }),
            Var => Asym::Term(Term { coef: Rational::one(), degree: 1, ratio: Rational::one(), exact: false }),
            Neg(a) => a.asymptotic().map(|t| Term { coef: -t.coef, ..t }),
            Add(a, b) => a.asymptotic().plus(b.asymptotic()),
            Sub(a, b) => a.asymptotic().plus(Neg(b.clone()).asymptotic()),
            Mul(a, b) => a.asymptotic().times(b.asymptotic()),
            Div(a, b) => match b.asymptotic() {
                Asym::Term(t) => a.asymptotic().times(Asym::Term(t.recip())),
                _ => Asym::Unknown,
            },
            Pow(base, exp) => {
                if let Some((slope, icpt)) = exp.affine() {
                    if slope.is_zero() {
                        if !icpt.is_integer() {
                            return Asym::Unknown;
                        }
                        let k = match icpt.to_integer().to_i64() {
                            Some(k) => k,
                            None => return Asym::Unknown,
                        };
                        return base.asymptotic().powi(k);
                    }
                    if base.is_constant() && slope.is_integer() && icpt.is_integer() {
                        let c = match base.eval(0) {
                            Ok(c) if c.is_positive() => c,
                            _ => return Asym::Unknown,
                        };
                        let (s, b0) = match (slope.to_integer().to_i64(), icpt.to_integer().to_i64()) {
                            (Some(s), Some(b0)) => (s, b0),
                            _ => return Asym::Unknown,
                        };
                        return match (pow_rat(&c, b0), pow_rat(&c, s)) {
                            (Some(coef), Some(ratio)) => Asym::Term(Term { coef, degree: 0, ratio, exact: true }),
                            _ => Asym::Unknown,
                        };
                    }
                }
                Asym::Unknown
            }
        }
    }
}

impl fmt::Display for IndexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use IndexExpr::*;
        match self {
            Num(r) if r.is_negative() => write!(f, "({r})"),
            Num(r) => write!(f, "{r}"),
            Var => f.write_str("i"),
            Add(a, b) => write!(f, "({a}+{b})"),
            Sub(a, b) => write!(f, "({a}-{b})"),
            Mul(a, b) => write!(f, "({a}*{b})"),
            Div(a, b) => write!(f, "({a}/{b})"),
            Neg(a) => write!(f, "(-{a})"),
            Pow(a, b) => write!(f, "({a}^{b})"),
        }
    }
}

/// `coef * i^degree * ratio^i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coef: Rational,
    pub degree: i64,
    pub ratio: Rational,
    /// True when the expression equals the term for every `i`, not just
    /// asymptotically.
    pub exact: bool,
}

impl Term {
    fn recip(self) -> Term {
        Term { coef: self.coef.recip(), degree: -self.degree, ratio: self.ratio.recip(), exact: self.exact }
    }

    fn growth_cmp(&self, other: &Term) -> std::cmp::Ordering {
        self.ratio.cmp(&other.ratio).then(self.degree.cmp(&other.degree))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Asym {
    Zero,
    Term(Term),
    Unknown,
}

impl Asym {
    fn map(self, f: impl FnOnce(Term) -> Term) -> Asym {
        match self {
            Asym::Term(t) => Asym::Term(f(t)),
            other => other,
        }
    }

    fn plus(self, other: Asym) -> Asym {
        match (self, other) {
            (Asym::Unknown, _) | (_, Asym::Unknown) => Asym::Unknown,
            (Asym::Zero, x) | (x, Asym::Zero) => x,
            (Asym::Term(a), Asym::Term(b)) => match a.growth_cmp(&b) {
                std::cmp::Ordering::Greater => Asym::Term(Term { exact: false, ..a }),
                std::cmp::Ordering::Less => Asym::Term(Term { exact: false, ..b }),
                std::cmp::Ordering::Equal => {
                    let coef = &a.coef + &b.coef;
                    if coef.is_zero() {
                        // cancellation hides the next order term
                        if a.exact && b.exact {
                            Asym::Zero
                        } else {
                            Asym::Unknown
                        }
                    } else {
                        Asym::Term(Term { coef, exact: a.exact && b.exact, ..a })
                    }
                }
            },
        }
    }

    fn times(self, other: Asym) -> Asym {
        match (self, other) {
            (Asym::Unknown, _) | (_, Asym::Unknown) => Asym::Unknown,
            (Asym::Zero, _) | (_, Asym::Zero) => Asym::Zero,
            (Asym::Term(a), Asym::Term(b)) => Asym::Term(Term {
                coef: a.coef * b.coef,
                degree: a.degree + b.degree,
                ratio: a.ratio * b.ratio,
                exact: a.exact && b.exact,
            }),
        }
    }

    fn powi(self, k: i64) -> Asym {
        match self {
            Asym::Zero if k > 0 => Asym::Zero,
            Asym::Zero => Asym::Unknown,
            Asym::Unknown => Asym::Unknown,
            Asym::Term(t) => match (pow_rat(&t.coef, k), pow_rat(&t.ratio, k)) {
                (Some(coef), Some(ratio)) => Asym::Term(Term { coef, degree: t.degree * k, ratio, exact: t.exact }),
                _ => Asym::Unknown,
            },
        }
    }
}

/// Behaviour of `sum_{i >= start} f(i)` for a nonnegative term `f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SeriesClass {
    /// Converges; `limit` is filled in when it has a closed form.
    Converges {
        #[serde(serialize_with = "ser_opt_rat")]
        limit: Option<Rational>,
    },
    Diverges,
    Unknown,
}

fn ser_opt_rat<S: serde::Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

impl SeriesClass {
    pub fn zero() -> Self {
        SeriesClass::Converges { limit: Some(Rational::zero()) }
    }

    /// Classifies a sum of several nonnegative series.
    pub fn sum(parts: impl IntoIterator<Item = SeriesClass>) -> SeriesClass {
        let mut acc = SeriesClass::zero();
        for p in parts {
            acc = match (acc, p) {
                (SeriesClass::Diverges, _) | (_, SeriesClass::Diverges) => SeriesClass::Diverges,
                (SeriesClass::Unknown, _) | (_, SeriesClass::Unknown) => SeriesClass::Unknown,
                (SeriesClass::Converges { limit: a }, SeriesClass::Converges { limit: b }) => {
                    SeriesClass::Converges { limit: a.zip(b).map(|(x, y)| x + y) }
                }
            };
        }
        acc
    }
}

/// Classifies `sum_{i >= start} expr(i)`, assuming the terms are nonnegative.
pub fn classify_series(expr: &IndexExpr, start: i64) -> SeriesClass {
    match expr.asymptotic() {
        Asym::Zero => SeriesClass::zero(),
        Asym::Unknown => SeriesClass::Unknown,
        Asym::Term(t) => {
            if t.coef.is_negative() {
                return SeriesClass::Unknown;
            }
            let one = Rational::one();
            let converges = t.ratio < one || (t.ratio == one && t.degree < -1);
            if !converges {
                return SeriesClass::Diverges;
            }
            let limit = if t.exact && t.degree == 0 {
                // coef * r^start / (1 - r)
                pow_rat(&t.ratio, start).map(|rs| &t.coef * rs / (&one - &t.ratio))
            } else {
                None
            };
            SeriesClass::Converges { limit }
        }
    }
}

/// `sum_{i=lo}^{hi} expr(i)` evaluated exactly.
pub fn partial_sum(expr: &IndexExpr, lo: i64, hi: i64) -> Result<Rational, EvalError> {
    let mut acc = Rational::zero();
    for i in lo..=hi {
        acc += expr.eval(i)?;
    }
    Ok(acc)
}

/// Least common multiple of denominators, used by the chain construction.
pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::{int, rat};
    use IndexExpr::*;

    fn b(e: IndexExpr) -> Box<IndexExpr> {
        Box::new(e)
    }

    #[test]
    fn harmonic_diverges_basel_converges() {
        let inv_i = Div(b(Num(int(1))), b(Var));
        assert_eq!(classify_series(&inv_i, 1), SeriesClass::Diverges);
        let inv_i2 = Mul(b(inv_i.clone()), b(inv_i));
        assert_eq!(classify_series(&inv_i2, 1), SeriesClass::Converges { limit: None });
    }

    #[test]
    fn geometric_has_closed_form() {
        // (1/4)^i from 1: 1/3
        let e = Pow(b(Num(rat(1, 4))), b(Var));
        assert_eq!(classify_series(&e, 1), SeriesClass::Converges { limit: Some(rat(1, 3)) });
        // 2^(-i) squared from 1
        let half = Pow(b(Num(int(2))), b(Neg(b(Var))));
        let sq = Mul(b(half.clone()), b(half));
        assert_eq!(classify_series(&sq, 1), SeriesClass::Converges { limit: Some(rat(1, 3)) });
    }

    #[test]
    fn constants_diverge() {
        assert_eq!(classify_series(&Num(rat(1, 2)), 1), SeriesClass::Diverges);
        assert_eq!(classify_series(&Num(int(0)), 1), SeriesClass::zero());
    }

    #[test]
    fn eval_and_partial_sums() {
        let inv_i2 = Div(b(Num(int(1))), b(Mul(b(Var), b(Var))));
        assert_eq!(partial_sum(&inv_i2, 1, 9).unwrap(), rat(9778141, 6350400));
        assert!(matches!(Div(b(Num(int(1))), b(Var)).eval(0), Err(EvalError::DivByZero(0))));
    }

    #[test]
    fn cancellation_is_unknown_unless_exact() {
        let e = Sub(b(Var), b(Var));
        assert_eq!(classify_series(&e, 1), SeriesClass::Unknown);
        let c = Sub(b(Num(int(1))), b(Num(int(1))));
        assert_eq!(classify_series(&c, 1), SeriesClass::zero());
    }
}
