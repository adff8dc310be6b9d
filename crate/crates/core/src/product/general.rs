//! The general product: abelianize, freeze free group factor summands,
//! build the hyperfinite core from dyadic chains, peel the frozen summands
//! back in, and amplify back to the original base.

use std::collections::BTreeSet;

use num_traits::{Signed, ToPrimitive, Zero};

use crate::algebra::{canonicalize, compress, AlgebraDesc, ProjectionSpec, Size, Summand, SummandKind};
use crate::dimension::rdim;
use crate::embedding::{
    abelianize, decompose_with_targets, multimatrix_chain, multiplicities, scale_by_size, Abelianized,
    AtomicSubalgebra, EmbeddingSpec, SimpleStep,
};
use crate::exactnum::{DimValue, ExtScalar, Rational};

use super::closed::{check_inputs, closed_form_product, family_limit, formula};
use super::engine::{scale_loc, sum_locs, EmbeddingFlag, EngineError, EngineState, Handle, Loc, Rule};
use super::{
    apply_simple_step, summarize_lineage, AdditivityCheck, Approximant, Convergence, ConvergenceStatus, Method,
    ProductError, ProductResult,
};

/// Order in which the two sides' simple steps are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    AThenB,
    BThenA,
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductOptions {
    pub depth_budget: u32,
    pub schedule: Schedule,
    /// Try the closed forms before the general engine.
    pub closed_forms: bool,
}

impl Default for ProductOptions {
    fn default() -> Self {
        ProductOptions { depth_budget: 8, schedule: Schedule::AThenB, closed_forms: true }
    }
}

struct Frozen {
    summand: usize,
    s: ExtScalar,
    corner_squares: Rational,
}

/// One side with its free group factor summands replaced by their D-corners.
struct Side {
    alg0: AlgebraDesc,
    e0: EmbeddingSpec,
    /// Summands of `alg0` making up each summand of the abelianized side.
    parts: Vec<Vec<usize>>,
    frozen: Vec<Frozen>,
    /// Summands of the original side with infinite trace.
    infinite: Vec<bool>,
}

fn freeze(x: &AlgebraDesc, e: &EmbeddingSpec, original: &AlgebraDesc) -> Side {
    let rows = e.alloc.len();
    let mut summands = Vec::new();
    let mut cols: Vec<Vec<Rational>> = Vec::new();
    let mut parts = Vec::new();
    let mut frozen = Vec::new();
    for (i, s) in x.summands.iter().enumerate() {
        let col: Vec<Rational> = e.alloc.iter().map(|r| r[i].clone()).collect();
        match &s.kind {
            SummandKind::FreeFactor { s: sp, .. } => {
                let mut mine = Vec::new();
                for (k, v) in col.iter().enumerate().filter(|(_, v)| v.is_positive()) {
                    mine.push(summands.len());
                    summands.push(Summand::matrix(1, v.clone(), format!("{}.{}", s.label, k + 1)));
                    let mut c = vec![Rational::zero(); rows];
                    c[k] = v.clone();
                    cols.push(c);
                }
                frozen.push(Frozen { summand: i, s: sp.clone(), corner_squares: col.iter().map(|v| v * v).sum() });
                parts.push(mine);
            }
            _ => {
                parts.push(vec![summands.len()]);
                summands.push(s.clone());
                cols.push(col);
            }
        }
    }
    let alloc = (0..rows).map(|k| cols.iter().map(|c| c[k].clone()).collect()).collect();
    Side {
        alg0: AlgebraDesc::new(summands),
        e0: EmbeddingSpec::new(alloc),
        parts,
        frozen,
        infinite: original.summands.iter().map(|s| s.total_trace().is_infinite()).collect(),
    }
}

#[derive(Clone)]
struct FinalBlock {
    handle: Handle,
    size: u64,
    unit: Rational,
    chain: bool,
}

struct Core {
    state: EngineState,
    d_handles: Vec<Handle>,
    blocks: [Vec<FinalBlock>; 2],
}

fn build_core(d: &AtomicSubalgebra, sides: [&Side; 2], depth: u32, schedule: Schedule) -> Result<Core, ProductError> {
    let d_alg = d.as_algebra("d");
    let mut st = EngineState::new(&d_alg)?;
    let d_handles: Vec<Handle> =
        d.traces().into_iter().enumerate().map(|(k, t)| st.track(Loc::from([(k as u64, t)]))).collect();

    let mut plans = Vec::new();
    for side in sides {
        let (chain_alg, _) = multimatrix_chain(&side.alg0, d, &side.e0, depth);
        let invalid = |issue| ProductError::Embedding { name: "chain".into(), issues: vec![issue] };
        let mult = multiplicities(&chain_alg, &side.e0.alloc).map_err(invalid)?;
        let (steps, targets) = decompose_with_targets(&d_alg, &chain_alg, &mult).map_err(invalid)?;
        let mut blocks = Vec::new();
        for h in &d_handles {
            let loc = st.loc(*h)?.clone();
            blocks.push(st.track(loc));
        }
        plans.push((chain_alg, steps, targets, Approximant { blocks }));
    }

    let order: Vec<(usize, usize)> = {
        let a: Vec<_> = (0..plans[0].1.len()).map(|i| (0, i)).collect();
        let b: Vec<_> = (0..plans[1].1.len()).map(|i| (1, i)).collect();
        match schedule {
            Schedule::AThenB => a.into_iter().chain(b).collect(),
            Schedule::BThenA => b.into_iter().chain(a).collect(),
            Schedule::Interleaved => {
                let mut out = Vec::new();
                let (mut ia, mut ib) = (a.into_iter(), b.into_iter());
                loop {
                    match (ia.next(), ib.next()) {
                        (None, None) => break,
                        (x, y) => out.extend(x.into_iter().chain(y)),
                    }
                }
                out
            }
        }
    };
    for (side, i) in order {
        let step: SimpleStep = plans[side].1[i].clone();
        apply_simple_step(&mut st, &mut plans[side].3, &step)?;
    }

    let mut blocks: [Vec<FinalBlock>; 2] = [Vec::new(), Vec::new()];
    for (n, (chain_alg, _, targets, approx)) in plans.into_iter().enumerate() {
        let mut out: Vec<Option<FinalBlock>> = vec![None; chain_alg.len()];
        for (pos, j) in targets.iter().enumerate() {
            let s = &chain_alg.summands[*j];
            let (size, unit) = match &s.kind {
                SummandKind::Matrix { size: Size::Finite(n), minimal_trace: ExtScalar::Finite(u) } => (*n, u.clone()),
                _ => return Err(EngineError::Invariant("chain level is not multimatrix".into()).into()),
            };
            let chain = matches!(sides[n].alg0.summands[*j].kind, SummandKind::DiffuseHyperfinite { .. });
            out[*j] = Some(FinalBlock { handle: approx.blocks[pos], size, unit, chain });
        }
        blocks[n] = out
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| EngineError::Invariant("a block of the approximant was never built".into()))?;
    }
    Ok(Core { state: st, d_handles, blocks })
}

struct Finished {
    state: EngineState,
    /// Location of the central support of each abelianized summand, per side.
    supports: [Vec<Loc>; 2],
}

fn support(st: &EngineState, blocks: &[FinalBlock], parts: &[usize]) -> Result<Loc, EngineError> {
    let locs = parts
        .iter()
        .map(|j| Ok(scale_loc(st.loc(blocks[*j].handle)?, &Rational::from_integer(blocks[*j].size.into()))))
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(sum_locs(&locs))
}

/// Optionally extrapolates the chain limit, then peels the frozen summands.
fn finish(core: &Core, sides: [&Side; 2], extrapolate: bool) -> Result<Option<Finished>, ProductError> {
    let mut st = if extrapolate {
        let chain: Vec<(Handle, Rational)> =
            core.blocks.iter().flatten().filter(|b| b.chain).map(|b| (b.handle, b.unit.clone())).collect();
        match core.state.extrapolate(&chain)? {
            Some(st) => st,
            None => return Ok(None),
        }
    } else {
        core.state.clone()
    };
    for (n, side) in sides.iter().enumerate() {
        for f in &side.frozen {
            let loc = support(&st, &core.blocks[n], &side.parts[f.summand])?;
            let touched: BTreeSet<u64> = loc.keys().copied().collect();
            let rdim_touched: DimValue =
                touched.iter().map(|id| crate::dimension::summand_rdim(&st.summand(*id).kind)).sum();
            let s = match &f.s {
                ExtScalar::Infinity => ExtScalar::Infinity,
                ExtScalar::Finite(s) => match DimValue::Finite(s + &f.corner_squares) + rdim_touched {
                    DimValue::Finite(v) if v.is_positive() => ExtScalar::Finite(v),
                    DimValue::PosInf => ExtScalar::Infinity,
                    other => return Err(EngineError::Invariant(format!("peeled factor would have s = {other}")).into()),
                },
            };
            let t: Rational = touched.iter().map(|id| st.summand_trace(*id)).sum();
            st.fuse(&touched, SummandKind::FreeFactor { s, t: t.into() }, Rule::Peel, EmbeddingFlag::Substandard)?;
        }
    }
    let mut supports: [Vec<Loc>; 2] = [Vec::new(), Vec::new()];
    for (n, side) in sides.iter().enumerate() {
        supports[n] = side.parts.iter().map(|p| support(&st, &core.blocks[n], p)).collect::<Result<_, _>>()?;
    }
    Ok(Some(Finished { state: st, supports }))
}

/// Amplifies the abelianized product back over the original base.
fn deabelianize(
    fin: &Finished,
    core: &Core,
    d: &AtomicSubalgebra,
    sides: [&Side; 2],
) -> Result<AlgebraDesc, ProductError> {
    let st = &fin.state;
    let mut infinite: BTreeSet<u64> = BTreeSet::new();
    for (n, side) in sides.iter().enumerate() {
        for (i, inf) in side.infinite.iter().enumerate() {
            if *inf {
                infinite.extend(fin.supports[n][i].keys().copied());
            }
        }
    }
    let mut summands = Vec::new();
    for id in st.ids() {
        let mut full = ExtScalar::zero();
        for (k, h) in core.d_handles.iter().enumerate() {
            if let Some(v) = st.loc(*h)?.get(&id) {
                full = full + scale_by_size(ExtScalar::Finite(v.clone()), d.blocks[k].size);
            }
        }
        if infinite.contains(&id) {
            full = ExtScalar::Infinity;
        }
        let s = st.summand(id);
        let kind = match &s.kind {
            SummandKind::Matrix { minimal_trace, .. } => {
                let u = minimal_trace.finite().expect("engine blocks are finite");
                let size = match &full {
                    ExtScalar::Infinity => Size::Infinite,
                    ExtScalar::Finite(f) => {
                        let n = f / u;
                        Size::Finite(n.to_integer().to_u64().filter(|_| n.is_integer()).ok_or_else(|| {
                            EngineError::Invariant(format!("amplified block has {n} minimal projections"))
                        })?)
                    }
                };
                SummandKind::Matrix { size, minimal_trace: minimal_trace.clone() }
            }
            SummandKind::FreeFactor { s, .. } => SummandKind::FreeFactor { s: s.clone(), t: full },
            SummandKind::DiffuseHyperfinite { .. } => SummandKind::DiffuseHyperfinite { total_trace: full },
        };
        summands.push(Summand::new(kind, s.label.clone()));
    }
    Ok(AlgebraDesc::new(summands))
}

struct Run {
    result: ProductResult,
    finished: Finished,
    /// The product before amplification, aligned with `finished.state`.
    abelian: AlgebraDesc,
}

fn run_general(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    opts: &ProductOptions,
) -> Result<Run, ProductError> {
    check_inputs(a, b, d, ea, eb)?;
    let ab: Abelianized =
        abelianize(d, a, b, ea, eb).map_err(|issues| ProductError::Embedding { name: "A or B".into(), issues })?;
    let side_a = freeze(&ab.a, &ab.ea, a);
    let side_b = freeze(&ab.b, &ab.eb, b);
    let sides = [&side_a, &side_b];
    let has_chain = [&side_a, &side_b]
        .iter()
        .any(|s| s.alg0.summands.iter().any(|x| matches!(x.kind, SummandKind::DiffuseHyperfinite { .. })));
    let core_formula = rdim(&side_a.alg0) + rdim(&side_b.alg0) - ab.d.rdim();

    let mut chosen: Option<(Core, Finished, u32, ConvergenceStatus)> = None;
    if !has_chain {
        let core = build_core(&ab.d, sides, 0, opts.schedule)?;
        let fin = finish(&core, sides, false)?.expect("no extrapolation requested");
        chosen = Some((core, fin, 0, ConvergenceStatus::Exact));
    } else {
        let mut previous: Option<Vec<SummandKind>> = None;
        let mut last: Option<(Core, u32)> = None;
        for depth in 1..=opts.depth_budget.max(1) {
            let core = build_core(&ab.d, sides, depth, opts.schedule)?;
            let limit = match finish(&core, sides, true)? {
                Some(fin) => {
                    let lim_core = core.state.extrapolate(
                        &core
                            .blocks
                            .iter()
                            .flatten()
                            .filter(|b| b.chain)
                            .map(|b| (b.handle, b.unit.clone()))
                            .collect::<Vec<_>>(),
                    )?;
                    let consistent = lim_core.map(|s| s.rdim()) == Some(core_formula.clone());
                    consistent.then_some(fin)
                }
                None => None,
            };
            match limit {
                Some(fin) => {
                    let shape = canonicalize(&fin.state.algebra()).shape();
                    if previous.as_ref() == Some(&shape) {
                        chosen = Some((core, fin, depth, ConvergenceStatus::Stable));
                        break;
                    }
                    previous = Some(shape);
                }
                None => previous = None,
            }
            last = Some((core, depth));
        }
        if chosen.is_none() {
            let (core, depth) = last.expect("at least one depth ran");
            let fin = finish(&core, sides, false)?.expect("no extrapolation requested");
            chosen = Some((core, fin, depth, ConvergenceStatus::BoundsOnly));
        }
    }
    let (core, fin, depth, status) = chosen.expect("set above");

    let abelian = fin.state.algebra();
    let full = deabelianize(&fin, &core, d, sides)?;
    let algebra = canonicalize(&full);
    let rdim_structural = rdim(&algebra);
    let rdim_formula = formula(a, b, d);
    let additivity_check = if status == ConvergenceStatus::BoundsOnly {
        AdditivityCheck::NotApplicable
    } else {
        AdditivityCheck::compare(&rdim_structural, &rdim_formula)
    };
    debug_assert_ne!(additivity_check, AdditivityCheck::Mismatch, "regulated dimension is not additive for {a} * {b}");
    let lineage = summarize_lineage(&fin.state.lineage, &algebra);
    let result = ProductResult {
        algebra,
        rdim_structural,
        rdim_formula,
        additivity_check,
        convergence: Convergence { status, depth, family_limit: family_limit(a, b, d) },
        lineage,
        method: Method::General,
    };
    Ok(Run { result, finished: fin, abelian })
}

/// `A *_D B` by the general engine.
pub fn product_general(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    opts: &ProductOptions,
) -> Result<ProductResult, ProductError> {
    run_general(a, b, d, ea, eb, opts).map(|r| r.result)
}

/// `A *_D B`, through a closed form when one applies.
pub fn product(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    opts: &ProductOptions,
) -> Result<ProductResult, ProductError> {
    if opts.closed_forms {
        match closed_form_product(a, b, d, ea, eb) {
            Err(ProductError::NotClosedForm) => {}
            other => return other,
        }
    }
    product_general(a, b, d, ea, eb, opts)
}

/// The hyperfinite core at one chain depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLevel {
    pub depth: u32,
    /// Core at this depth, frozen summands peeled, no extrapolation.
    pub raw: AlgebraDesc,
    /// Extrapolated diffuse limit, when every chain block sits in one summand.
    pub limit: Option<AlgebraDesc>,
}

/// The cores for depths `1..=max_depth`, over abelianized input.
pub fn chain_levels(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    max_depth: u32,
) -> Result<Vec<ChainLevel>, ProductError> {
    check_inputs(a, b, d, ea, eb)?;
    let ab = abelianize(d, a, b, ea, eb).map_err(|issues| ProductError::Embedding { name: "A or B".into(), issues })?;
    let side_a = freeze(&ab.a, &ab.ea, a);
    let side_b = freeze(&ab.b, &ab.eb, b);
    let sides = [&side_a, &side_b];
    (1..=max_depth)
        .map(|depth| {
            let core = build_core(&ab.d, sides, depth, Schedule::AThenB)?;
            let raw = finish(&core, sides, false)?.expect("no extrapolation requested");
            let limit = finish(&core, sides, true)?;
            Ok(ChainLevel {
                depth,
                raw: canonicalize(&raw.state.algebra()),
                limit: limit.map(|f| canonicalize(&f.state.algebra())),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consistency {
    pub matches: bool,
    /// `p M p` read off the product directly.
    pub direct: AlgebraDesc,
    /// `p M p` rebuilt from the product with `p`'s summand cut down to its
    /// D-corner, freely extended by that summand.
    pub via_corner: AlgebraDesc,
}

fn spec(st: &EngineState, loc: &Loc) -> ProjectionSpec {
    st.spec_of(loc)
}

/// Computes the corner of the product at the central support of summand
/// `label` of `a` in two ways and compares them. Works on abelianized input.
pub fn check_compression_consistency(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    label: &str,
    opts: &ProductOptions,
) -> Result<Consistency, ProductError> {
    check_inputs(a, b, d, ea, eb)?;
    let ab = abelianize(d, a, b, ea, eb).map_err(|issues| ProductError::Embedding { name: "A or B".into(), issues })?;
    let i = ab.a.index_of(label).ok_or_else(|| ProductError::UnknownLabel(label.into()))?;
    let first = direct_run(&ab, opts)?;
    corner_consistency(&ab, &first, i, opts)
}

/// [`check_compression_consistency`] at every summand of `a`, in order,
/// sharing one direct product.
pub fn check_compression_consistency_all(
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    d: &AtomicSubalgebra,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
    opts: &ProductOptions,
) -> Result<Vec<(String, Consistency)>, ProductError> {
    check_inputs(a, b, d, ea, eb)?;
    let ab = abelianize(d, a, b, ea, eb).map_err(|issues| ProductError::Embedding { name: "A or B".into(), issues })?;
    let first = direct_run(&ab, opts)?;
    (0..ab.a.len()).map(|i| Ok((ab.a.summands[i].label.clone(), corner_consistency(&ab, &first, i, opts)?))).collect()
}

fn direct_run(ab: &Abelianized, opts: &ProductOptions) -> Result<Run, ProductError> {
    let first = run_general(&ab.a, &ab.b, &ab.d, &ab.ea, &ab.eb, opts)?;
    if first.result.is_bounds_only() {
        return Err(ProductError::NotStable(opts.depth_budget));
    }
    Ok(first)
}

fn corner_consistency(
    ab: &Abelianized,
    first: &Run,
    i: usize,
    opts: &ProductOptions,
) -> Result<Consistency, ProductError> {
    let label = &ab.a.summands[i].label;
    let p = spec(&first.finished.state, &first.finished.supports[0][i]);
    let direct = canonicalize(&compress(&first.abelian, &p).map_err(|e| EngineError::Invariant(e.to_string()))?);

    // The same side with summand `i` replaced by its D-corner.
    let ks: Vec<usize> = (0..ab.d.len()).filter(|k| ab.ea.alloc[*k][i].is_positive()).collect();
    let mut summands = ab.a.summands.clone();
    let corner: Vec<Summand> =
        ks.iter().map(|k| Summand::matrix(1, ab.ea.alloc[*k][i].clone(), format!("{label}#{}", k + 1))).collect();
    summands.splice(i..=i, corner);
    let under = AlgebraDesc::new(summands);
    let under_e = EmbeddingSpec::new(
        ab.ea
            .alloc
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let mut r = row.clone();
                let cut: Vec<Rational> =
                    ks.iter().map(|kk| if *kk == k { row[i].clone() } else { Rational::zero() }).collect();
                r.splice(i..=i, cut);
                r
            })
            .collect(),
    );
    let second = run_general(&under, &ab.b, &ab.d, &under_e, &ab.eb, opts)?;
    if second.result.is_bounds_only() {
        return Err(ProductError::NotStable(opts.depth_budget));
    }
    let st = &second.finished.state;
    let corner_locs: Vec<&Loc> = (0..ks.len()).map(|n| &second.finished.supports[0][i + n]).collect();
    let p_loc = sum_locs(corner_locs.iter().copied());
    let kept: Vec<u64> = st.ids().into_iter().filter(|id| p_loc.contains_key(id)).collect();
    let x = compress(&second.abelian, &spec(st, &p_loc)).map_err(|e| EngineError::Invariant(e.to_string()))?;
    let e_x = EmbeddingSpec::new(
        corner_locs
            .iter()
            .map(|l| kept.iter().map(|id| l.get(id).cloned().unwrap_or_else(Rational::zero)).collect())
            .collect(),
    );
    let p_d = AtomicSubalgebra::abelian(ks.iter().map(|k| ab.ea.alloc[*k][i].clone()));
    let p_a = AlgebraDesc::new(vec![ab.a.summands[i].clone()]);
    let e_pa = EmbeddingSpec::new(ks.iter().map(|k| vec![ab.ea.alloc[*k][i].clone()]).collect());
    let r = product(&x, &p_a, &p_d, &e_x, &e_pa, opts)?;
    if r.is_bounds_only() {
        return Err(ProductError::NotStable(opts.depth_budget));
    }
    let via_corner = r.algebra;
    Ok(Consistency { matches: direct.shape() == via_corner.shape(), direct, via_corner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::rat;

    fn ext(n: i64, d: i64) -> ExtScalar {
        ExtScalar::from_ratio(n, d)
    }

    fn half_half() -> AtomicSubalgebra {
        AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)])
    }

    fn spread() -> EmbeddingSpec {
        EmbeddingSpec::new(vec![vec![rat(1, 2)], vec![rat(1, 2)]])
    }

    fn general() -> ProductOptions {
        ProductOptions { closed_forms: false, ..ProductOptions::default() }
    }

    #[test]
    fn base_times_b_is_b() {
        let d = half_half();
        let a = d.as_algebra("d");
        let ea = EmbeddingSpec::new(vec![vec![rat(1, 2), rat(0, 1)], vec![rat(0, 1), rat(1, 2)]]);
        let b = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 2), "m")]);
        let r = product_general(&a, &b, &d, &ea, &spread(), &general()).unwrap();
        assert_eq!(r.algebra.shape(), b.shape());
        assert_eq!(r.additivity_check, AdditivityCheck::Match);
    }

    #[test]
    fn diffuse_pair_through_chains_matches_closed_form() {
        let d = half_half();
        let h = AlgebraDesc::new(vec![Summand::diffuse(ext(1, 1), "h")]);
        let r = product_general(&h, &h, &d, &spread(), &spread(), &general()).unwrap();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: ext(1, 2), t: ext(1, 1) }]);
        assert_eq!(r.convergence.status, ConvergenceStatus::Stable);
        assert!(r.convergence.depth <= 4);
    }

    #[test]
    fn frozen_factor_is_peeled() {
        let d = half_half();
        let a =
            AlgebraDesc::new(vec![Summand::diffuse(ext(1, 2), "h"), Summand::free_factor(ext(1, 4), ext(1, 2), "f")]);
        let ea = EmbeddingSpec::new(vec![vec![rat(1, 2), rat(0, 1)], vec![rat(0, 1), rat(1, 2)]]);
        let b = AlgebraDesc::new(vec![Summand::free_factor(ext(1, 1), ext(1, 1), "g")]);
        let r = product_general(&a, &b, &d, &ea, &spread(), &general()).unwrap();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: ext(7, 4), t: ext(1, 1) }]);
        let c = check_compression_consistency(&a, &b, &d, &ea, &spread(), "f", &general()).unwrap();
        assert!(c.matches, "{} vs {}", c.direct, c.via_corner);
    }

    #[test]
    fn non_abelian_base_is_amplified_back() {
        let d = AtomicSubalgebra::new(vec![crate::embedding::DBlock::new(2, rat(1, 4))]);
        let a = AlgebraDesc::new(vec![Summand::matrix(4, rat(1, 8), "a")]);
        let ea = EmbeddingSpec::new(vec![vec![rat(1, 4)]]);
        let b = AlgebraDesc::new(vec![Summand::matrix(2, rat(1, 4), "b")]);
        let eb = EmbeddingSpec::new(vec![vec![rat(1, 4)]]);
        let r = product_general(&a, &b, &d, &ea, &eb, &general()).unwrap();
        assert_eq!(r.algebra.shape(), a.shape());
        assert_eq!(r.additivity_check, AdditivityCheck::Match);
    }
}
