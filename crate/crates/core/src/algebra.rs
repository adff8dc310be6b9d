//! Formal direct-sum descriptions of algebras.
//!
//! An [`AlgebraDesc`] is an ordered list of summands, each one of a matrix
//! block (finite or `B(H)`), a diffuse hyperfinite piece, or a semifinite
//! interpolated free group factor `F_s^t`. Summand labels stand for central
//! supports and survive every transformation in this module.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::exactnum::{ExtScalar, Rational};
use crate::series::SeriesClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Size {
    Finite(u64),
    Infinite,
}

impl Size {
    pub fn as_ext(&self) -> ExtScalar {
        match self {
            Size::Finite(n) => ExtScalar::Finite(Rational::from_integer(BigInt::from(*n))),
            Size::Infinite => ExtScalar::Infinity,
        }
    }

    pub fn finite(&self) -> Option<u64> {
        match self {
            Size::Finite(n) => Some(*n),
            Size::Infinite => None,
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Finite(n) => write!(f, "{n}"),
            Size::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SummandKind {
    /// `M_size` whose minimal projections have trace `minimal_trace`.
    Matrix {
        size: Size,
        minimal_trace: ExtScalar,
    },
    DiffuseHyperfinite {
        total_trace: ExtScalar,
    },
    /// `F_s^t`: `L(F_{1 + s/t^2})` with total trace `t`, or its `B(H)`
    /// amplification when `t` is infinite.
    FreeFactor {
        s: ExtScalar,
        t: ExtScalar,
    },
}

impl SummandKind {
    pub fn rank(&self) -> u8 {
        match self {
            SummandKind::Matrix { .. } => 0,
            SummandKind::DiffuseHyperfinite { .. } => 1,
            SummandKind::FreeFactor { .. } => 2,
        }
    }

    pub fn total_trace(&self) -> ExtScalar {
        match self {
            SummandKind::Matrix { size: Size::Infinite, .. } => ExtScalar::Infinity,
            SummandKind::Matrix { size: Size::Finite(n), minimal_trace } => match minimal_trace {
                ExtScalar::Finite(u) => ExtScalar::Finite(u * BigInt::from(*n)),
                ExtScalar::Infinity => minimal_trace.scale(&Rational::from_integer(BigInt::from(*n))),
            },
            SummandKind::DiffuseHyperfinite { total_trace } => total_trace.clone(),
            SummandKind::FreeFactor { t, .. } => t.clone(),
        }
    }

    /// Finite minimal trace of a matrix block.
    pub fn minimal_trace(&self) -> Option<&Rational> {
        match self {
            SummandKind::Matrix { minimal_trace, .. } => minimal_trace.finite(),
            _ => None,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, SummandKind::Matrix { .. })
    }

    /// The free group parameter `r = 1 + s/t^2` for finite `t`.
    pub fn free_group_parameter(&self) -> Option<ExtScalar> {
        match self {
            SummandKind::FreeFactor { s, t: ExtScalar::Finite(t) } => {
                let ratio = match s {
                    ExtScalar::Finite(s) => ExtScalar::Finite(s / (t * t)),
                    ExtScalar::Infinity => ExtScalar::Infinity,
                };
                Some(ratio + ExtScalar::one())
            }
            _ => None,
        }
    }

    pub(crate) fn sort_key(&self) -> (u8, std::cmp::Reverse<ExtScalar>, std::cmp::Reverse<ExtScalar>) {
        use std::cmp::Reverse;
        match self {
            SummandKind::Matrix { size, minimal_trace } => (0, Reverse(size.as_ext()), Reverse(minimal_trace.clone())),
            SummandKind::DiffuseHyperfinite { total_trace } => {
                (1, Reverse(total_trace.clone()), Reverse(ExtScalar::zero()))
            }
            SummandKind::FreeFactor { s, t } => (2, Reverse(t.clone()), Reverse(s.clone())),
        }
    }
}

impl fmt::Display for SummandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SummandKind::Matrix { size, minimal_trace } => write!(f, "M({size}; {minimal_trace})"),
            SummandKind::DiffuseHyperfinite { total_trace } => write!(f, "H({total_trace})"),
            SummandKind::FreeFactor { s, t } => write!(f, "FG({s}; {t})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Summand {
    pub kind: SummandKind,
    pub label: String,
}

impl Summand {
    pub fn new(kind: SummandKind, label: impl Into<String>) -> Self {
        Summand { kind, label: label.into() }
    }

    pub fn matrix(size: u64, minimal_trace: Rational, label: impl Into<String>) -> Self {
        Self::new(SummandKind::Matrix { size: Size::Finite(size), minimal_trace: minimal_trace.into() }, label)
    }

    pub fn diffuse(total_trace: ExtScalar, label: impl Into<String>) -> Self {
        Self::new(SummandKind::DiffuseHyperfinite { total_trace }, label)
    }

    pub fn free_factor(s: ExtScalar, t: ExtScalar, label: impl Into<String>) -> Self {
        Self::new(SummandKind::FreeFactor { s, t }, label)
    }

    pub fn total_trace(&self) -> ExtScalar {
        self.kind.total_trace()
    }
}

/// Limits of the series attached to a declared countable family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FamilyLimits {
    /// Sum of total traces over the whole family.
    pub trace: SeriesClass,
    /// Sum of the positive regulated-dimension contributions (`s` values).
    pub rdim_positive: SeriesClass,
    /// Sum of the magnitudes of negative contributions (squared minimal traces).
    pub rdim_negative: SeriesClass,
}

/// Marks a description as the first `terms` members of a countable family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Truncation {
    pub terms: u64,
    pub limits: FamilyLimits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlgebraDesc {
    pub summands: Vec<Summand>,
    pub truncation: Option<Truncation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraIssue {
    #[error("algebra has no summands")]
    Empty,
    #[error("duplicate summand label `{0}`")]
    DuplicateLabel(String),
    #[error("summand `{0}`: minimal trace must be finite")]
    InfiniteMinimalTrace(String),
    #[error("summand `{0}`: trace must be positive")]
    NonpositiveTrace(String),
    #[error("summand `{0}`: size must be positive or inf")]
    ZeroSize(String),
    #[error("summand `{0}`: free dimension parameter s must be positive")]
    NonpositiveS(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompressError {
    #[error("projection has {got} entries for {expected} summands")]
    Length { expected: usize, got: usize },
    #[error("allocation {alloc} exceeds trace {trace} of summand `{label}`")]
    Exceeds { label: String, alloc: ExtScalar, trace: ExtScalar },
    #[error("allocation {alloc} on `{label}` is not a multiple of its minimal trace {minimal}")]
    NotMultiple { label: String, alloc: ExtScalar, minimal: ExtScalar },
    #[error("projection is zero")]
    Zero,
}

impl AlgebraDesc {
    pub fn new(summands: Vec<Summand>) -> Self {
        AlgebraDesc { summands, truncation: None }
    }

    /// Builds a description with generated labels `prefix1`, `prefix2`, ...
    pub fn from_kinds(prefix: &str, kinds: impl IntoIterator<Item = SummandKind>) -> Self {
        AlgebraDesc::new(
            kinds.into_iter().enumerate().map(|(i, k)| Summand::new(k, format!("{prefix}{}", i + 1))).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.summands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summands.is_empty()
    }

    pub fn total_trace(&self) -> ExtScalar {
        self.summands.iter().map(Summand::total_trace).sum()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.summands.iter().position(|s| s.label == label)
    }

    pub fn is_multimatrix(&self) -> bool {
        self.summands.iter().all(|s| s.kind.is_matrix())
    }

    /// Direct sum; labels of `other` are kept and must not collide.
    pub fn direct_sum(&self, other: &AlgebraDesc) -> AlgebraDesc {
        let mut summands = self.summands.clone();
        summands.extend(other.summands.iter().cloned());
        AlgebraDesc::new(summands)
    }

    /// Summand kinds in canonical order, labels dropped. Two descriptions
    /// describe the same algebra exactly when their shapes are equal.
    pub fn shape(&self) -> Vec<SummandKind> {
        canonicalize(self).summands.into_iter().map(|s| s.kind).collect()
    }
}

impl fmt::Display for AlgebraDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.summands.iter().enumerate() {
            if i > 0 {
                f.write_str(" (+) ")?;
            }
            write!(f, "{}", s.kind)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports each violation.
pub fn validate_algebra(a: &AlgebraDesc) -> Result<(), Vec<AlgebraIssue>> {
    let mut issues = Vec::new();
    if a.summands.is_empty() {
        issues.push(AlgebraIssue::Empty);
    }
    let mut seen = HashSet::new();
    for s in &a.summands {
        if !seen.insert(s.label.as_str()) {
            issues.push(AlgebraIssue::DuplicateLabel(s.label.clone()));
        }
        let label = || s.label.clone();
        match &s.kind {
            SummandKind::Matrix { size, minimal_trace } => {
                if *size == Size::Finite(0) {
                    issues.push(AlgebraIssue::ZeroSize(label()));
                }
                match minimal_trace {
                    ExtScalar::Infinity => issues.push(AlgebraIssue::InfiniteMinimalTrace(label())),
                    ExtScalar::Finite(t) if !t.is_positive() => issues.push(AlgebraIssue::NonpositiveTrace(label())),
                    _ => {}
                }
            }
            SummandKind::DiffuseHyperfinite { total_trace } => {
                if total_trace.is_zero() {
                    issues.push(AlgebraIssue::NonpositiveTrace(label()));
                }
            }
            SummandKind::FreeFactor { s: sp, t } => {
                if t.is_zero() {
                    issues.push(AlgebraIssue::NonpositiveTrace(label()));
                }
                if sp.is_zero() {
                    issues.push(AlgebraIssue::NonpositiveS(label()));
                }
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Deterministic normal form: summands sorted by kind, then by size and
/// traces (larger first), then by label. Nothing is merged.
pub fn canonicalize(a: &AlgebraDesc) -> AlgebraDesc {
    let mut summands = a.summands.clone();
    summands.sort_by(|x, y| x.kind.sort_key().cmp(&y.kind.sort_key()).then_with(|| x.label.cmp(&y.label)));
    AlgebraDesc { summands, truncation: a.truncation.clone() }
}

/// Multiplies every trace by `c`. `F_s^t` goes to `F_{c^2 s}^{c t}`, which
/// keeps the free group parameter fixed.
pub fn rescale_trace(a: &AlgebraDesc, c: &Rational) -> AlgebraDesc {
    assert!(c.is_positive(), "rescale factor must be positive");
    let summands = a
        .summands
        .iter()
        .map(|s| {
            let kind = match &s.kind {
                SummandKind::Matrix { size, minimal_trace } => {
                    SummandKind::Matrix { size: *size, minimal_trace: minimal_trace.scale(c) }
                }
                SummandKind::DiffuseHyperfinite { total_trace } => {
                    SummandKind::DiffuseHyperfinite { total_trace: total_trace.scale(c) }
                }
                SummandKind::FreeFactor { s: sp, t } => {
                    SummandKind::FreeFactor { s: sp.scale(&(c * c)), t: t.scale(c) }
                }
            };
            Summand::new(kind, s.label.clone())
        })
        .collect();
    AlgebraDesc { summands, truncation: a.truncation.clone() }
}

/// A projection given by its trace inside each summand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProjectionSpec {
    pub alloc: Vec<ExtScalar>,
}

impl ProjectionSpec {
    pub fn new(alloc: Vec<ExtScalar>) -> Self {
        ProjectionSpec { alloc }
    }

    pub fn from_rationals(alloc: impl IntoIterator<Item = Rational>) -> Self {
        ProjectionSpec { alloc: alloc.into_iter().map(ExtScalar::from).collect() }
    }

    /// The identity of `a`.
    pub fn identity(a: &AlgebraDesc) -> Self {
        ProjectionSpec { alloc: a.summands.iter().map(Summand::total_trace).collect() }
    }

    pub fn total(&self) -> ExtScalar {
        self.alloc.iter().cloned().sum()
    }

    pub fn full_central_support(&self) -> bool {
        self.alloc.iter().all(|x| !x.is_zero())
    }

    /// Checks the projection against `a`.
    pub fn validate(&self, a: &AlgebraDesc) -> Result<(), CompressError> {
        if self.alloc.len() != a.len() {
            return Err(CompressError::Length { expected: a.len(), got: self.alloc.len() });
        }
        if self.alloc.iter().all(ExtScalar::is_zero) {
            return Err(CompressError::Zero);
        }
        for (x, s) in self.alloc.iter().zip(&a.summands) {
            let trace = s.total_trace();
            if *x > trace {
                return Err(CompressError::Exceeds { label: s.label.clone(), alloc: x.clone(), trace });
            }
            if let SummandKind::Matrix { minimal_trace, .. } = &s.kind {
                if matrix_multiplicity(x, minimal_trace).is_none() {
                    return Err(CompressError::NotMultiple {
                        label: s.label.clone(),
                        alloc: x.clone(),
                        minimal: minimal_trace.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Number of minimal projections making up `alloc`, if it is a whole multiple.
pub fn matrix_multiplicity(alloc: &ExtScalar, minimal: &ExtScalar) -> Option<Size> {
    match (alloc, minimal) {
        (ExtScalar::Infinity, ExtScalar::Finite(_)) => Some(Size::Infinite),
        (ExtScalar::Finite(x), ExtScalar::Finite(t)) if t.is_positive() => {
            let m = x / t;
            if m.is_integer() {
                m.to_integer().to_u64().map(Size::Finite)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Compresses `a` by the projection `p`. Summands with zero allocation are
/// dropped; everything else keeps its label.
pub fn compress(a: &AlgebraDesc, p: &ProjectionSpec) -> Result<AlgebraDesc, CompressError> {
    p.validate(a)?;
    let mut summands = Vec::new();
    for (x, s) in p.alloc.iter().zip(&a.summands) {
        if x.is_zero() {
            continue;
        }
        let kind = match &s.kind {
            SummandKind::Matrix { minimal_trace, .. } => SummandKind::Matrix {
                size: matrix_multiplicity(x, minimal_trace).expect("validated"),
                minimal_trace: minimal_trace.clone(),
            },
            SummandKind::DiffuseHyperfinite { .. } => SummandKind::DiffuseHyperfinite { total_trace: x.clone() },
            SummandKind::FreeFactor { s: sp, .. } => SummandKind::FreeFactor { s: sp.clone(), t: x.clone() },
        };
        summands.push(Summand::new(kind, s.label.clone()));
    }
    Ok(AlgebraDesc { summands, truncation: a.truncation.clone() })
}
