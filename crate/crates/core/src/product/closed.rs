//! Products whose answer is a single free group factor read off from the
//! input parameters.

use crate::algebra::{canonicalize, validate_algebra, AlgebraDesc, Summand, SummandKind};
use crate::dimension::{rdim, rdim_limit, series_difference, LimitDim};
use crate::embedding::{validate_embedding, AtomicSubalgebra, EmbeddingSpec};
use crate::exactnum::{DimValue, ExtScalar};
use crate::series::SeriesClass;

use super::engine::{EmbeddingFlag, LineageEvent, Rule};
use super::{summarize_lineage, AdditivityCheck, Convergence, ConvergenceStatus, Method, ProductError, ProductResult};

pub(crate) fn check_inputs(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
) -> Result<(), ProductError> {
    for (name, x, e) in [("A", a, ea), ("B", b, eb)] {
        validate_algebra(x).map_err(|issues| ProductError::Algebra { name: name.into(), issues })?;
        validate_embedding(d, x, e).map_err(|issues| ProductError::Embedding { name: name.into(), issues })?;
    }
    Ok(())
}

/// Regulated dimension of the whole declared family behind `d`.
pub(crate) fn subalgebra_limit(d: &AtomicSubalgebra) -> LimitDim {
    match &d.truncation {
        Some(t) => series_difference(&SeriesClass::zero(), &t.limits.rdim_negative),
        None => LimitDim::Exact(d.rdim()),
    }
}

pub(crate) fn family_limit(a: &AlgebraDesc, b: &AlgebraDesc, d: &AtomicSubalgebra) -> Option<LimitDim> {
    if a.truncation.is_none() && b.truncation.is_none() && d.truncation.is_none() {
        return None;
    }
    Some(rdim_limit(a).add(&rdim_limit(b)).sub(&subalgebra_limit(d)))
}

pub(crate) fn formula(a: &AlgebraDesc, b: &AlgebraDesc, d: &AtomicSubalgebra) -> DimValue {
    rdim(a) + rdim(b) - d.rdim()
}

/// Single-summand shapes with a known answer. `d` must be abelian and both
/// sides must be factors, so the product is one free group factor.
pub fn closed_form_product(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
) -> Result<ProductResult, ProductError> {
    if !d.is_abelian() {
        return Err(ProductError::NotClosedForm);
    }
    check_inputs(a, b, d, ea, eb)?;
    let single = |x: &AlgebraDesc| (x.len() == 1).then(|| x.summands[0].kind.clone());
    let (ka, kb) = (single(a), single(b));
    let free = |k: &Option<SummandKind>| matches!(k, Some(SummandKind::FreeFactor { .. }));
    let diffuse = |k: &Option<SummandKind>| matches!(k, Some(SummandKind::DiffuseHyperfinite { .. }));

    let t = a.total_trace();
    if t != b.total_trace() {
        return Err(ProductError::NotClosedForm);
    }
    let rule = if diffuse(&ka) && diffuse(&kb) {
        Rule::DiffuseDiffuse
    } else if free(&ka) && free(&kb) {
        Rule::FreeFree
    } else if (free(&ka) && diffuse(&kb)) || (diffuse(&ka) && free(&kb)) {
        Rule::FreeHyperfinite
    } else if free(&ka) || free(&kb) {
        let other = if free(&ka) { b } else { a };
        if matches!(rdim(other), DimValue::NegInf | DimValue::Undefined) {
            return Err(ProductError::NotClosedForm);
        }
        Rule::FreeGeneral
    } else {
        return Err(ProductError::NotClosedForm);
    };

    let rdim_formula = formula(a, b, d);
    let s = match &rdim_formula {
        DimValue::Finite(x) if *x > num_traits::Zero::zero() => ExtScalar::Finite(x.clone()),
        DimValue::PosInf => ExtScalar::Infinity,
        _ => return Err(ProductError::NotClosedForm),
    };
    let label = "z1".to_string();
    let algebra = canonicalize(&AlgebraDesc::new(vec![Summand::new(SummandKind::FreeFactor { s, t }, label.clone())]));
    let event = LineageEvent {
        step: 0,
        rule,
        summand: label,
        parents: a.summands.iter().chain(&b.summands).map(|s| s.label.clone()).collect(),
        kind: algebra.summands[0].kind.clone(),
        embedding: if rule == Rule::DiffuseDiffuse { EmbeddingFlag::Standard } else { EmbeddingFlag::Substandard },
    };
    let rdim_structural = rdim(&algebra);
    Ok(ProductResult {
        additivity_check: AdditivityCheck::compare(&rdim_structural, &rdim_formula),
        lineage: summarize_lineage(&[event], &algebra),
        algebra,
        rdim_structural,
        rdim_formula,
        convergence: Convergence { status: ConvergenceStatus::Exact, depth: 0, family_limit: family_limit(a, b, d) },
        method: Method::ClosedForm(rule),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{FamilyLimits, Truncation};
    use crate::exactnum::{rat, Rational};

    fn ext(n: i64, d: i64) -> ExtScalar {
        ExtScalar::from_ratio(n, d)
    }

    fn one(kind: SummandKind, l: &str) -> AlgebraDesc {
        AlgebraDesc::new(vec![Summand::new(kind, l)])
    }

    fn column(d: &AtomicSubalgebra) -> EmbeddingSpec {
        EmbeddingSpec::new(d.traces().into_iter().map(|t| vec![t]).collect())
    }

    #[test]
    fn diffuse_diffuse() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let h = one(SummandKind::DiffuseHyperfinite { total_trace: ext(1, 1) }, "h");
        let r = closed_form_product(&h, &h, &d, &column(&d), &column(&d)).unwrap();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: ext(1, 2), t: ext(1, 1) }]);
        assert_eq!(r.additivity_check, AdditivityCheck::Match);
        assert_eq!(r.method, Method::ClosedForm(Rule::DiffuseDiffuse));
    }

    #[test]
    fn free_free_and_free_hyperfinite() {
        let d = AtomicSubalgebra::abelian([rat(1, 1)]);
        let f1 = one(SummandKind::FreeFactor { s: ext(1, 1), t: ext(1, 1) }, "f");
        let f2 = one(SummandKind::FreeFactor { s: ext(2, 1), t: ext(1, 1) }, "g");
        let r = closed_form_product(&f1, &f2, &d, &column(&d), &column(&d)).unwrap();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: ext(4, 1), t: ext(1, 1) }]);
        let h = one(SummandKind::DiffuseHyperfinite { total_trace: ext(1, 1) }, "h");
        let r = closed_form_product(&f1, &h, &d, &column(&d), &column(&d)).unwrap();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: ext(2, 1), t: ext(1, 1) }]);
    }

    #[test]
    fn semifinite_diffuse_pair_over_a_truncated_family() {
        let n = 6;
        let traces: Vec<Rational> =
            (1..=n).map(|i| Rational::new(1.into(), num_bigint::BigInt::from(2).pow(i))).collect();
        let mut d = AtomicSubalgebra::abelian(traces.clone());
        d.truncation = Some(Truncation {
            terms: n as u64,
            limits: FamilyLimits {
                trace: SeriesClass::Converges { limit: Some(rat(1, 1)) },
                rdim_positive: SeriesClass::zero(),
                rdim_negative: SeriesClass::Converges { limit: Some(rat(1, 3)) },
            },
        });
        let h = one(SummandKind::DiffuseHyperfinite { total_trace: ExtScalar::Infinity }, "h");
        let r = closed_form_product(&h, &h, &d, &column(&d), &column(&d)).unwrap();
        let partial: Rational = traces.iter().map(|t| t * t).sum();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: partial.into(), t: ExtScalar::Infinity }]);
        assert_eq!(r.convergence.family_limit, Some(LimitDim::Exact(DimValue::Finite(rat(1, 3)))));
    }

    #[test]
    fn other_shapes_fall_through() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let m = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 2), "m")]);
        assert_eq!(closed_form_product(&m, &m, &d, &column(&d), &column(&d)), Err(ProductError::NotClosedForm));
    }
}
