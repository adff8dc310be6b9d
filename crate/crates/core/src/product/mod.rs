//! Amalgamated free products over atomic type I subalgebras.

mod closed;
mod engine;
mod general;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{canonicalize, AlgebraDesc, AlgebraIssue, ProjectionSpec};
use crate::dimension::LimitDim;
use crate::embedding::{EmbeddingIssue, SimpleStep};
use crate::exactnum::{DimValue, ExtScalar};

pub use closed::closed_form_product;
pub use engine::{
    scale_loc, sum_locs, EmbeddingFlag, EngineError, EngineState, Handle, LineageEvent, Loc, Rule, SummandId,
};
pub use general::{
    chain_levels, check_compression_consistency, check_compression_consistency_all, product, product_general,
    ChainLevel, Consistency, ProductOptions, Schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditivityCheck {
    Match,
    Mismatch,
    NotApplicable,
}

impl AdditivityCheck {
    pub fn compare(structural: &DimValue, formula: &DimValue) -> Self {
        if formula.is_undefined() || structural.is_undefined() {
            AdditivityCheck::NotApplicable
        } else if structural == formula {
            AdditivityCheck::Match
        } else {
            AdditivityCheck::Mismatch
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    /// No diffuse summand needed approximating.
    Exact,
    /// Two consecutive chain depths agreed.
    Stable,
    /// The depth budget ran out; free group factor parameters are lower bounds.
    BoundsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Convergence {
    pub status: ConvergenceStatus,
    pub depth: u32,
    /// Regulated dimension of the full declared family, for truncated input.
    pub family_limit: Option<LimitDim>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageSummary {
    pub summand: String,
    pub rewrites: usize,
    pub rules: BTreeMap<Rule, usize>,
    pub substandard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm(Rule),
    General,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductResult {
    /// Canonical description of the product.
    pub algebra: AlgebraDesc,
    pub rdim_structural: DimValue,
    pub rdim_formula: DimValue,
    pub additivity_check: AdditivityCheck,
    pub convergence: Convergence,
    pub lineage: Vec<LineageSummary>,
    pub method: Method,
}

impl ProductResult {
    pub fn is_bounds_only(&self) -> bool {
        self.convergence.status == ConvergenceStatus::BoundsOnly
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProductError {
    #[error("invalid algebra `{name}`: {}", join(.issues))]
    Algebra { name: String, issues: Vec<AlgebraIssue> },
    #[error("invalid embedding into `{name}`: {}", join(.issues))]
    Embedding { name: String, issues: Vec<EmbeddingIssue> },
    #[error("input is not one of the closed-form shapes")]
    NotClosedForm,
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("no summand labelled `{0}`")]
    UnknownLabel(String),
    #[error("chain approximation did not stabilize within depth {0}")]
    NotStable(u32),
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Summarizes the rewrites behind each summand of `algebra`.
pub(crate) fn summarize_lineage(events: &[LineageEvent], algebra: &AlgebraDesc) -> Vec<LineageSummary> {
    let by_label: BTreeMap<&str, &LineageEvent> = events.iter().map(|e| (e.summand.as_str(), e)).collect();
    algebra
        .summands
        .iter()
        .map(|s| {
            let mut rules = BTreeMap::new();
            let mut substandard = false;
            let mut seen = BTreeSet::new();
            let mut stack = vec![s.label.as_str()];
            while let Some(l) = stack.pop() {
                if !seen.insert(l) {
                    continue;
                }
                if let Some(e) = by_label.get(l) {
                    *rules.entry(e.rule).or_insert(0) += 1;
                    substandard |= e.embedding == EmbeddingFlag::Substandard;
                    stack.extend(e.parents.iter().map(String::as_str));
                }
            }
            LineageSummary { summand: s.label.clone(), rewrites: rules.values().sum(), rules, substandard }
        })
        .collect()
}

/// `N *_D M_2` for `D` spanned by `p` and `1 - p`: the two-by-two matrix
/// rewrite, at the original trace scale.
pub fn m2_rewrite(n: &AlgebraDesc, p: &ProjectionSpec) -> Result<AlgebraDesc, EngineError> {
    let total = n.total_trace();
    let half = total.finite().map(|t| ExtScalar::Finite(t / crate::exactnum::int(2)));
    if half.as_ref() != Some(&p.total()) {
        return Err(EngineError::NotHalf { got: p.total(), total });
    }
    let mut st = EngineState::new(n)?;
    let rest = ProjectionSpec::new(
        n.summands
            .iter()
            .zip(&p.alloc)
            .map(|(s, x)| {
                s.total_trace()
                    .checked_sub(x)
                    .ok_or_else(|| EngineError::Invariant("projection exceeds a summand".into()))
            })
            .collect::<Result<_, _>>()?,
    );
    p.validate(n).map_err(|e| EngineError::Invariant(e.to_string()))?;
    rest.validate(n).map_err(|e| EngineError::Invariant(e.to_string()))?;
    let h1 = st.track_spec(p)?;
    let h2 = st.track_spec(&rest)?;
    st.add_partial_isometry_generic(h1, h2)?;
    Ok(canonicalize(&st.algebra()))
}

/// The blocks of one side's current approximant, by handle of a minimal
/// projection, in step-index order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Approximant {
    pub blocks: Vec<Handle>,
}

/// Applies one simple step of a side's approximant to the product state.
pub fn apply_simple_step(st: &mut EngineState, side: &mut Approximant, step: &SimpleStep) -> Result<(), EngineError> {
    match step {
        SimpleStep::First { source, weights, .. } => {
            let h = *side.blocks.get(*source).ok_or(EngineError::Dangling(*source as Handle))?;
            let copies = st.split(h, weights)?;
            side.blocks.splice(*source..=*source, copies);
        }
        SimpleStep::Second { pair: (i, j) } => {
            let (hi, hj) = match (side.blocks.get(*i), side.blocks.get(*j)) {
                (Some(a), Some(b)) if i < j => (*a, *b),
                _ => return Err(EngineError::Dangling(*j as Handle)),
            };
            st.add_partial_isometry(hi, hj)?;
            st.untrack(hj);
            side.blocks.remove(*j);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Size, Summand, SummandKind};
    use crate::exactnum::rat;

    fn ext(n: i64, d: i64) -> ExtScalar {
        ExtScalar::from_ratio(n, d)
    }

    #[test]
    fn m2_examples() {
        let n = AlgebraDesc::from_kinds(
            "n",
            (0..4).map(|_| SummandKind::Matrix { size: Size::Finite(1), minimal_trace: ext(1, 4) }),
        );
        let p = ProjectionSpec::new(vec![ext(1, 4), ext(1, 4), ext(0, 1), ext(0, 1)]);
        assert_eq!(
            m2_rewrite(&n, &p).unwrap().shape(),
            vec![SummandKind::DiffuseHyperfinite { total_trace: ext(1, 1) }]
        );

        let n = AlgebraDesc::new(vec![
            Summand::matrix(1, rat(3, 8), "a"),
            Summand::matrix(1, rat(1, 8), "b"),
            Summand::matrix(2, rat(1, 8), "c"),
            Summand::matrix(1, rat(1, 4), "d"),
        ]);
        let p = ProjectionSpec::new(vec![ext(3, 8), ext(1, 8), ext(0, 1), ext(0, 1)]);
        assert_eq!(
            m2_rewrite(&n, &p).unwrap().shape(),
            vec![
                SummandKind::Matrix { size: Size::Finite(2), minimal_trace: ext(1, 8) },
                SummandKind::FreeFactor { s: ext(1, 32), t: ext(3, 4) },
            ]
        );

        let n = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 4), "a"), Summand::matrix(2, rat(1, 4), "b")]);
        let p = ProjectionSpec::new(vec![ext(1, 2), ext(0, 1)]);
        assert_eq!(m2_rewrite(&n, &p).unwrap().shape(), vec![SummandKind::FreeFactor { s: ext(1, 8), t: ext(1, 1) }]);
    }

    #[test]
    fn m2_preconditions() {
        let n = AlgebraDesc::new(vec![Summand::matrix(1, rat(1, 2), "a"), Summand::matrix(2, rat(1, 4), "b")]);
        let p = ProjectionSpec::new(vec![ext(1, 2), ext(0, 1)]);
        assert_eq!(m2_rewrite(&n, &p), Err(EngineError::MinimalCentral));
        let p = ProjectionSpec::new(vec![ext(0, 1), ext(1, 4)]);
        assert!(matches!(m2_rewrite(&n, &p), Err(EngineError::NotHalf { .. })));
    }

    #[test]
    fn second_kind_step_is_a_partial_isometry() {
        let n = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 4), "a"), Summand::matrix(2, rat(1, 4), "b")]);
        let mut st = EngineState::new(&n).unwrap();
        let p = st.track(Loc::from([(0, rat(1, 4))]));
        let q = st.track(Loc::from([(1, rat(1, 4))]));
        let mut direct = st.clone();
        direct.add_partial_isometry(p, q).unwrap();
        let mut side = Approximant { blocks: vec![p, q] };
        apply_simple_step(&mut st, &mut side, &SimpleStep::Second { pair: (0, 1) }).unwrap();
        assert_eq!(canonicalize(&st.algebra()).shape(), canonicalize(&direct.algebra()).shape());
        assert_eq!(side.blocks, vec![p]);
    }

    #[test]
    fn first_kind_step_inside_a_factor() {
        let mut st =
            EngineState::new(&AlgebraDesc::new(vec![Summand::free_factor(ext(1, 4), ext(1, 1), "f")])).unwrap();
        let h = st.track(Loc::from([(0, rat(1, 2))]));
        let mut side = Approximant { blocks: vec![h] };
        let step = SimpleStep::First { source: 0, count: 2, weights: vec![rat(1, 4), rat(1, 4)] };
        apply_simple_step(&mut st, &mut side, &step).unwrap();
        assert_eq!(st.algebra().shape(), vec![SummandKind::FreeFactor { s: ext(3, 8), t: ext(1, 1) }]);
        assert_eq!(side.blocks.len(), 2);
    }
}
