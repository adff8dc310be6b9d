//! Free dimension and regulated dimension.

use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{AlgebraDesc, SummandKind};
use crate::exactnum::{DimValue, ExtScalar, Rational};
use crate::series::SeriesClass;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimensionError {
    #[error("fdim requires a normalized tracial state (total trace is {0})")]
    NotNormalized(ExtScalar),
}

/// Contribution of one summand: `s` for `F_s^t`, `-t^2` for a matrix block
/// with minimal trace `t`, zero for diffuse hyperfinite pieces.
pub fn summand_rdim(kind: &SummandKind) -> DimValue {
    match kind {
        SummandKind::Matrix { minimal_trace, .. } => match minimal_trace {
            ExtScalar::Finite(t) => DimValue::Finite(-(t * t)),
            ExtScalar::Infinity => DimValue::NegInf,
        },
        SummandKind::DiffuseHyperfinite { .. } => DimValue::zero(),
        SummandKind::FreeFactor { s, .. } => s.to_dim(),
    }
}

/// Regulated dimension of the (possibly truncated) description.
pub fn rdim(a: &AlgebraDesc) -> DimValue {
    a.summands.iter().map(|s| summand_rdim(&s.kind)).sum()
}

/// Free dimension; defined only when the total trace is 1.
pub fn fdim(a: &AlgebraDesc) -> Result<DimValue, DimensionError> {
    let total = a.total_trace();
    if total != ExtScalar::one() {
        return Err(DimensionError::NotNormalized(total));
    }
    Ok(DimValue::Finite(Rational::one()) + rdim(a))
}

/// What a sum of regulated dimensions does over a whole declared family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class", content = "value", rename_all = "snake_case")]
pub enum LimitDim {
    /// The limit is known: a rational, an infinity, or undefined.
    Exact(DimValue),
    /// Finite, but with no closed form available.
    Finite,
    Unknown,
}

impl LimitDim {
    pub fn is_undefined(&self) -> bool {
        matches!(self, LimitDim::Exact(DimValue::Undefined))
    }

    fn combine(&self, other: &LimitDim, sub: bool) -> LimitDim {
        use LimitDim::*;
        let other = if sub {
            match other {
                Exact(v) => Exact(v.negated()),
                x => x.clone(),
            }
        } else {
            other.clone()
        };
        match (self, &other) {
            (Exact(a), Exact(b)) => Exact(a.clone() + b.clone()),
            (Exact(DimValue::Undefined), _) | (_, Exact(DimValue::Undefined)) => Exact(DimValue::Undefined),
            (Exact(inf @ (DimValue::PosInf | DimValue::NegInf)), Finite)
            | (Finite, Exact(inf @ (DimValue::PosInf | DimValue::NegInf))) => Exact(inf.clone()),
            (Exact(DimValue::Finite(_)), Finite) | (Finite, Exact(DimValue::Finite(_))) | (Finite, Finite) => Finite,
            _ => Unknown,
        }
    }

    pub fn add(&self, other: &LimitDim) -> LimitDim {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &LimitDim) -> LimitDim {
        self.combine(other, true)
    }
}

impl fmt::Display for LimitDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitDim::Exact(v) => write!(f, "{v}"),
            LimitDim::Finite => f.write_str("finite"),
            LimitDim::Unknown => f.write_str("unknown"),
        }
    }
}

/// Regulated dimension of the full declared family behind a truncated
/// description; equal to [`rdim`] for untruncated input.
pub fn rdim_limit(a: &AlgebraDesc) -> LimitDim {
    let Some(tr) = &a.truncation else {
        return LimitDim::Exact(rdim(a));
    };
    let pos = &tr.limits.rdim_positive;
    let neg = &tr.limits.rdim_negative;
    series_difference(pos, neg)
}

/// Limit of `pos - neg` for two nonnegative series.
pub fn series_difference(pos: &SeriesClass, neg: &SeriesClass) -> LimitDim {
    use SeriesClass::*;
    match (pos, neg) {
        (Diverges, Diverges) => LimitDim::Exact(DimValue::Undefined),
        (Diverges, Converges { .. }) => LimitDim::Exact(DimValue::PosInf),
        (Converges { .. }, Diverges) => LimitDim::Exact(DimValue::NegInf),
        (Converges { limit: Some(p) }, Converges { limit: Some(n) }) => LimitDim::Exact(DimValue::Finite(p - n)),
        (Converges { .. }, Converges { .. }) => LimitDim::Finite,
        _ => LimitDim::Unknown,
    }
}

/// `rdim` of a sum of squares, as used for abelian subalgebras.
pub fn negative_square_sum<'a>(ts: impl IntoIterator<Item = &'a Rational>) -> DimValue {
    let mut acc = Rational::zero();
    for t in ts {
        acc -= t * t;
    }
    DimValue::Finite(acc)
}
