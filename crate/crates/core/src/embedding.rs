//! Atomic subalgebras, trace-compatible embeddings, simple steps and
//! dyadic multimatrix chains.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{compress, AlgebraDesc, ProjectionSpec, Size, Summand, SummandKind, Truncation};
use crate::dimension::negative_square_sum;
use crate::exactnum::{DimValue, ExtScalar, Rational};
use crate::series::lcm_denominators;

/// One block `M_n` of the amalgamation base, with the trace of a minimal projection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DBlock {
    pub size: Size,
    #[serde(serialize_with = "crate::exactnum::ser_rational")]
    pub minimal_trace: Rational,
}

impl DBlock {
    pub fn new(size: u64, minimal_trace: Rational) -> Self {
        DBlock { size: Size::Finite(size), minimal_trace }
    }

    pub fn total_trace(&self) -> ExtScalar {
        scale_by_size(ExtScalar::Finite(self.minimal_trace.clone()), self.size)
    }
}

/// `n` copies of a projection of trace `x`.
pub fn scale_by_size(x: ExtScalar, n: Size) -> ExtScalar {
    match n {
        Size::Finite(k) => x.scale(&Rational::from_integer(k.into())),
        Size::Infinite if x.is_zero() => x,
        Size::Infinite => ExtScalar::Infinity,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicSubalgebra {
    pub blocks: Vec<DBlock>,
    pub truncation: Option<Truncation>,
}

impl AtomicSubalgebra {
    pub fn new(blocks: Vec<DBlock>) -> Self {
        AtomicSubalgebra { blocks, truncation: None }
    }

    /// `C(t_1) (+) C(t_2) (+) ...`
    pub fn abelian(traces: impl IntoIterator<Item = Rational>) -> Self {
        AtomicSubalgebra::new(traces.into_iter().map(|t| DBlock::new(1, t)).collect())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_abelian(&self) -> bool {
        self.blocks.iter().all(|b| b.size == Size::Finite(1))
    }

    pub fn traces(&self) -> Vec<Rational> {
        self.blocks.iter().map(|b| b.minimal_trace.clone()).collect()
    }

    pub fn total_trace(&self) -> ExtScalar {
        self.blocks.iter().map(DBlock::total_trace).sum()
    }

    pub fn rdim(&self) -> DimValue {
        negative_square_sum(self.blocks.iter().map(|b| &b.minimal_trace))
    }

    /// The subalgebra as a stand-alone algebra with labels `prefix1`, `prefix2`, ...
    pub fn as_algebra(&self, prefix: &str) -> AlgebraDesc {
        let summands = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                Summand::new(
                    SummandKind::Matrix { size: b.size, minimal_trace: ExtScalar::Finite(b.minimal_trace.clone()) },
                    format!("{prefix}{}", k + 1),
                )
            })
            .collect();
        AlgebraDesc { summands, truncation: self.truncation.clone() }
    }
}

/// `alloc[k][i]`: trace of the part of one minimal projection of D-block `k`
/// lying in summand `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbeddingSpec {
    #[serde(serialize_with = "crate::exactnum::ser_rational_matrix")]
    pub alloc: Vec<Vec<Rational>>,
}

impl EmbeddingSpec {
    pub fn new(alloc: Vec<Vec<Rational>>) -> Self {
        EmbeddingSpec { alloc }
    }

    /// `Σ_k alloc[k][i]` for every summand `i`.
    pub fn corner_sums(&self, cols: usize) -> Vec<Rational> {
        (0..cols).map(|i| self.alloc.iter().map(|row| row[i].clone()).sum()).collect()
    }

    /// `Σ_k n_k alloc[k][i]` for every summand `i`.
    pub fn column_sums(&self, d: &AtomicSubalgebra, cols: usize) -> Vec<ExtScalar> {
        (0..cols)
            .map(|i| {
                self.alloc
                    .iter()
                    .zip(&d.blocks)
                    .map(|(row, b)| scale_by_size(ExtScalar::Finite(row[i].clone()), b.size))
                    .sum()
            })
            .collect()
    }

    /// Location of a minimal projection of D-block `k`.
    pub fn row(&self, k: usize) -> &[Rational] {
        &self.alloc[k]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingIssue {
    #[error("allocation matrix is {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    Shape { rows: usize, cols: usize, exp_rows: usize, exp_cols: usize },
    #[error("row {row}, column {col}: allocation {value} is negative")]
    Negative { row: usize, col: usize, value: Rational },
    #[error("row {row}: allocations sum to {got}, expected minimal trace {expected}")]
    RowSum { row: usize, expected: Rational, got: Rational },
    #[error("column {col} (`{label}`): D covers trace {got}, summand has trace {expected}")]
    ColumnSum { col: usize, label: String, expected: ExtScalar, got: ExtScalar },
    #[error("row {row}, column {col} (`{label}`): allocation {value} is not a multiple of minimal trace {minimal}")]
    NotMultiple { row: usize, col: usize, label: String, value: Rational, minimal: ExtScalar },
    #[error("inclusion is not trace compatible: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Compress(#[from] crate::algebra::CompressError),
}

/// Checks row sums, column sums and matrix multiples. When `d` is a truncation
/// of a countable family, summands of infinite trace only need to be reached.
pub fn validate_embedding(d: &AtomicSubalgebra, a: &AlgebraDesc, e: &EmbeddingSpec) -> Result<(), Vec<EmbeddingIssue>> {
    let (rows, cols) = (d.len(), a.len());
    if e.alloc.len() != rows || e.alloc.iter().any(|r| r.len() != cols) {
        return Err(vec![EmbeddingIssue::Shape {
            rows: e.alloc.len(),
            cols: e.alloc.first().map_or(0, Vec::len),
            exp_rows: rows,
            exp_cols: cols,
        }]);
    }
    let mut issues = Vec::new();
    for (k, row) in e.alloc.iter().enumerate() {
        for (i, x) in row.iter().enumerate() {
            if x.is_negative() {
                issues.push(EmbeddingIssue::Negative { row: k, col: i, value: x.clone() });
            }
            if let SummandKind::Matrix { minimal_trace, .. } = &a.summands[i].kind {
                if crate::algebra::matrix_multiplicity(&ExtScalar::Finite(x.abs()), minimal_trace).is_none() {
                    issues.push(EmbeddingIssue::NotMultiple {
                        row: k,
                        col: i,
                        label: a.summands[i].label.clone(),
                        value: x.clone(),
                        minimal: minimal_trace.clone(),
                    });
                }
            }
        }
        let got: Rational = row.iter().sum();
        if got != d.blocks[k].minimal_trace {
            issues.push(EmbeddingIssue::RowSum { row: k, expected: d.blocks[k].minimal_trace.clone(), got });
        }
    }
    for (i, got) in e.column_sums(d, cols).into_iter().enumerate() {
        let expected = a.summands[i].total_trace();
        let relaxed = d.truncation.is_some() && expected.is_infinite() && !got.is_zero();
        if got != expected && !relaxed {
            issues.push(EmbeddingIssue::ColumnSum { col: i, label: a.summands[i].label.clone(), expected, got });
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// An amalgamated pair reduced to an abelian base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abelianized {
    pub d: AtomicSubalgebra,
    pub a: AlgebraDesc,
    pub b: AlgebraDesc,
    pub ea: EmbeddingSpec,
    pub eb: EmbeddingSpec,
}

/// Cuts both algebras down by the sum of one minimal projection from every
/// D-block. Allocations are unchanged; labels survive.
pub fn abelianize(
    d: &AtomicSubalgebra,
    a: &AlgebraDesc,
    b: &AlgebraDesc,
    ea: &EmbeddingSpec,
    eb: &EmbeddingSpec,
) -> Result<Abelianized, Vec<EmbeddingIssue>> {
    validate_embedding(d, a, ea)?;
    validate_embedding(d, b, eb)?;
    let cut = |x: &AlgebraDesc, e: &EmbeddingSpec| -> Result<AlgebraDesc, Vec<EmbeddingIssue>> {
        let p = ProjectionSpec::from_rationals(e.corner_sums(x.len()));
        compress(x, &p).map_err(|err| vec![err.into()])
    };
    let mut d2 = AtomicSubalgebra::abelian(d.traces());
    d2.truncation = d.truncation.clone();
    Ok(Abelianized { a: cut(a, ea)?, b: cut(b, eb)?, d: d2, ea: ea.clone(), eb: eb.clone() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimpleStep {
    /// Replaces the block at `source` by `weights.len()` copies with the given
    /// minimal traces, inserted in place.
    First {
        source: usize,
        count: usize,
        #[serde(serialize_with = "crate::exactnum::ser_rationals")]
        weights: Vec<Rational>,
    },
    /// Merges the block at `pair.1` into the block at `pair.0` (`pair.0 < pair.1`).
    Second { pair: (usize, usize) },
}

/// A block of a multimatrix algebra together with how many copies of each
/// source block it contains.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReplayBlock {
    pub size: u64,
    pub minimal_trace: Rational,
    pub mult: Vec<u64>,
}

fn finite_blocks(x: &AlgebraDesc) -> Result<Vec<(u64, Rational)>, EmbeddingIssue> {
    x.summands
        .iter()
        .map(|s| match &s.kind {
            SummandKind::Matrix { size: Size::Finite(n), minimal_trace: ExtScalar::Finite(t) } => Ok((*n, t.clone())),
            _ => Err(EmbeddingIssue::Incompatible(format!("`{}` is not a finite matrix block", s.label))),
        })
        .collect()
}

/// Multiplicities of the inclusion of `n` into the multimatrix algebra `m`
/// described by location rows (one row per block of `n`).
pub fn multiplicities(m: &AlgebraDesc, rows: &[Vec<Rational>]) -> Result<Vec<Vec<u64>>, EmbeddingIssue> {
    let mb = finite_blocks(m)?;
    rows.iter()
        .map(|row| {
            row.iter()
                .zip(&mb)
                .map(|(x, (_, u))| {
                    let q = x / u;
                    if q.is_integer() {
                        q.to_integer()
                            .to_u64()
                            .ok_or_else(|| EmbeddingIssue::Incompatible(format!("bad multiplicity {q}")))
                    } else {
                        Err(EmbeddingIssue::Incompatible(format!("{x} is not a multiple of {u}")))
                    }
                })
                .collect()
        })
        .collect()
}

/// Writes the unital trace-preserving inclusion `n -> m` with multiplicity
/// matrix `mult[k][j]` as first-kind splits followed by second-kind merges.
pub fn decompose_simple_steps(
    n: &AlgebraDesc,
    m: &AlgebraDesc,
    mult: &[Vec<u64>],
) -> Result<Vec<SimpleStep>, EmbeddingIssue> {
    decompose_with_targets(n, m, mult).map(|(steps, _)| steps)
}

/// As [`decompose_simple_steps`], also returning which block of `m` each
/// block of the final list is.
pub fn decompose_with_targets(
    n: &AlgebraDesc,
    m: &AlgebraDesc,
    mult: &[Vec<u64>],
) -> Result<(Vec<SimpleStep>, Vec<usize>), EmbeddingIssue> {
    let nb = finite_blocks(n)?;
    let mb = finite_blocks(m)?;
    if mult.len() != nb.len() || mult.iter().any(|r| r.len() != mb.len()) {
        return Err(EmbeddingIssue::Incompatible("multiplicity matrix has the wrong shape".into()));
    }
    for (k, (_, t)) in nb.iter().enumerate() {
        let got: Rational = mult[k].iter().zip(&mb).map(|(c, (_, u))| u * Rational::from_integer((*c).into())).sum();
        if &got != t {
            return Err(EmbeddingIssue::Incompatible(format!("block {k}: trace {t} lands as {got}")));
        }
    }
    for (j, (size, _)) in mb.iter().enumerate() {
        let got: u64 = mult.iter().zip(&nb).map(|(r, (nk, _))| r[j] * nk).sum();
        if got != *size {
            return Err(EmbeddingIssue::Incompatible(format!("target block {j}: size {size} receives {got}")));
        }
    }

    let mut steps = Vec::new();
    // Target of every block in the current list.
    let mut targets: Vec<usize> = Vec::new();
    for (k, row) in mult.iter().enumerate() {
        let copies: Vec<usize> =
            row.iter().enumerate().flat_map(|(j, c)| std::iter::repeat_n(j, *c as usize)).collect();
        if copies.len() > 1 {
            steps.push(SimpleStep::First {
                source: targets.len(),
                count: copies.len(),
                weights: copies.iter().map(|j| mb[*j].1.clone()).collect(),
            });
        }
        debug_assert!(!copies.is_empty(), "block {k} vanished");
        targets.extend(copies);
    }
    for j in 0..mb.len() {
        while let Some(first) = targets.iter().position(|x| *x == j) {
            let Some(off) = targets[first + 1..].iter().position(|x| *x == j) else {
                break;
            };
            let second = first + 1 + off;
            steps.push(SimpleStep::Second { pair: (first, second) });
            targets.remove(second);
        }
    }
    Ok((steps, targets))
}

/// Applies `steps` to the blocks of `n`, tracking source multiplicities.
pub fn replay_steps(n: &AlgebraDesc, steps: &[SimpleStep]) -> Result<Vec<ReplayBlock>, EmbeddingIssue> {
    let nb = finite_blocks(n)?;
    let mut blocks: Vec<ReplayBlock> = nb
        .iter()
        .enumerate()
        .map(|(k, (size, t))| {
            let mut mult = vec![0; nb.len()];
            mult[k] = 1;
            ReplayBlock { size: *size, minimal_trace: t.clone(), mult }
        })
        .collect();
    for step in steps {
        match step {
            SimpleStep::First { source, count, weights } => {
                let src = blocks
                    .get(*source)
                    .cloned()
                    .ok_or_else(|| EmbeddingIssue::Incompatible(format!("dead block {source}")))?;
                let total: Rational = weights.iter().sum();
                if weights.len() != *count || total != src.minimal_trace {
                    return Err(EmbeddingIssue::Incompatible(format!("split of block {source} loses trace")));
                }
                let copies = weights.iter().map(|w| ReplayBlock { minimal_trace: w.clone(), ..src.clone() });
                blocks.splice(*source..=*source, copies);
            }
            SimpleStep::Second { pair: (i, j) } => {
                if i >= j || *j >= blocks.len() || blocks[*i].minimal_trace != blocks[*j].minimal_trace {
                    return Err(EmbeddingIssue::Incompatible(format!("cannot merge blocks {i} and {j}")));
                }
                let other = blocks.remove(*j);
                let keep = &mut blocks[*i];
                keep.size += other.size;
                for (x, y) in keep.mult.iter_mut().zip(other.mult) {
                    *x += y;
                }
            }
        }
    }
    Ok(blocks)
}

/// The blocks of `m` with the multiplicities of `mult`, in canonical order,
/// for comparison with [`replay_steps`].
pub fn expected_blocks(m: &AlgebraDesc, mult: &[Vec<u64>]) -> Result<Vec<ReplayBlock>, EmbeddingIssue> {
    let mut out: Vec<ReplayBlock> = finite_blocks(m)?
        .into_iter()
        .enumerate()
        .map(|(j, (size, t))| ReplayBlock { size, minimal_trace: t, mult: mult.iter().map(|r| r[j]).collect() })
        .collect();
    out.sort();
    Ok(out)
}

/// Minimal trace used for a diffuse summand at chain `depth`.
pub fn chain_unit(allocs: &[Rational], depth: u32) -> Rational {
    let l = lcm_denominators(allocs.iter().filter(|x| !x.is_zero()));
    Rational::new(BigInt::one(), l * BigInt::from(2).pow(depth))
}

/// Replaces each diffuse summand by a matrix block fine enough to contain its
/// D-allocations at dyadic `depth`. Other summands pass through, so the
/// result is multimatrix exactly when `a` has no free factor summands.
pub fn multimatrix_chain(
    a: &AlgebraDesc,
    d: &AtomicSubalgebra,
    e: &EmbeddingSpec,
    depth: u32,
) -> (AlgebraDesc, EmbeddingSpec) {
    debug_assert!(d.is_abelian());
    let summands = a
        .summands
        .iter()
        .enumerate()
        .map(|(i, s)| match &s.kind {
            SummandKind::DiffuseHyperfinite { .. } => {
                let col: Vec<Rational> = e.alloc.iter().map(|r| r[i].clone()).collect();
                let u = chain_unit(&col, depth);
                let total: Rational = col.iter().sum();
                let n = (total / &u).to_integer().to_u64().expect("chain block size fits in u64");
                Summand::new(
                    SummandKind::Matrix { size: Size::Finite(n), minimal_trace: ExtScalar::Finite(u) },
                    s.label.clone(),
                )
            }
            _ => s.clone(),
        })
        .collect();
    (AlgebraDesc { summands, truncation: a.truncation.clone() }, e.clone())
}

/// Multiplicities of the inclusion of chain level `depth` into `depth + 1`.
pub fn chain_step_multiplicities(level: &AlgebraDesc, next: &AlgebraDesc) -> Vec<Vec<u64>> {
    let n = level.len();
    let mut mult = vec![vec![0; n]; n];
    for (i, (x, y)) in level.summands.iter().zip(&next.summands).enumerate() {
        let ratio = match (x.kind.minimal_trace(), y.kind.minimal_trace()) {
            (Some(u), Some(v)) => (u / v).to_integer().to_u64().unwrap_or(1),
            _ => 1,
        };
        mult[i][i] = ratio;
    }
    mult
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::canonicalize;
    use crate::exactnum::rat;
    use proptest::prelude::*;

    fn m(n: u64, t: Rational, l: &str) -> Summand {
        Summand::matrix(n, t, l)
    }

    fn e(rows: Vec<Vec<Rational>>) -> EmbeddingSpec {
        EmbeddingSpec::new(rows)
    }

    #[test]
    fn validate_examples() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let a = AlgebraDesc::new(vec![m(2, rat(1, 2), "a")]);
        assert!(validate_embedding(&d, &a, &e(vec![vec![rat(1, 2)], vec![rat(1, 2)]])).is_ok());

        let d = AtomicSubalgebra::new(vec![DBlock::new(2, rat(1, 4))]);
        let a = AlgebraDesc::new(vec![m(4, rat(1, 8), "a")]);
        assert!(validate_embedding(&d, &a, &e(vec![vec![rat(1, 4)]])).is_ok());

        let d = AtomicSubalgebra::abelian([rat(1, 1)]);
        let a = AlgebraDesc::new(vec![m(1, rat(1, 2), "a"), m(1, rat(1, 2), "b")]);
        assert!(validate_embedding(&d, &a, &e(vec![vec![rat(1, 2), rat(1, 2)]])).is_ok());
        let errs = validate_embedding(&d, &a, &e(vec![vec![rat(1, 1), rat(0, 1)]])).unwrap_err();
        assert!(errs.iter().any(|x| matches!(x, EmbeddingIssue::ColumnSum { col: 0, .. })));
        assert!(errs.iter().any(|x| matches!(x, EmbeddingIssue::ColumnSum { col: 1, .. })));
    }

    #[test]
    fn validate_reports_rows_and_shape() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let a = AlgebraDesc::new(vec![Summand::diffuse(ExtScalar::one(), "h")]);
        let errs = validate_embedding(&d, &a, &e(vec![vec![rat(1, 2)], vec![rat(1, 4)]])).unwrap_err();
        assert!(errs.contains(&EmbeddingIssue::RowSum { row: 1, expected: rat(1, 2), got: rat(1, 4) }));
        assert!(matches!(
            validate_embedding(&d, &a, &e(vec![vec![rat(1, 2)]])).unwrap_err()[0],
            EmbeddingIssue::Shape { .. }
        ));
    }

    #[test]
    fn abelianize_examples() {
        let d = AtomicSubalgebra::new(vec![DBlock::new(2, rat(1, 4))]);
        let a = AlgebraDesc::new(vec![m(4, rat(1, 8), "a")]);
        let b = AlgebraDesc::new(vec![Summand::free_factor(ExtScalar::one(), ExtScalar::from_ratio(1, 2), "f")]);
        let row = e(vec![vec![rat(1, 4)]]);
        let ab = abelianize(&d, &a, &b, &row, &row).unwrap();
        assert_eq!(ab.d, AtomicSubalgebra::abelian([rat(1, 4)]));
        assert_eq!(ab.a, AlgebraDesc::new(vec![m(2, rat(1, 8), "a")]));
        assert_eq!(
            ab.b,
            AlgebraDesc::new(vec![Summand::free_factor(ExtScalar::one(), ExtScalar::from_ratio(1, 4), "f")])
        );
        let again = abelianize(&ab.d, &ab.a, &ab.b, &ab.ea, &ab.eb).unwrap();
        assert_eq!(again, ab);
    }

    #[test]
    fn abelian_base_is_left_alone() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let a = AlgebraDesc::new(vec![m(2, rat(1, 2), "a")]);
        let ea = e(vec![vec![rat(1, 2)], vec![rat(1, 2)]]);
        let ab = abelianize(&d, &a, &a, &ea, &ea).unwrap();
        assert_eq!((ab.a, ab.d), (a, d));
    }

    fn check_replay(n: &AlgebraDesc, mm: &AlgebraDesc, mult: &[Vec<u64>]) -> Vec<SimpleStep> {
        let steps = decompose_simple_steps(n, mm, mult).unwrap();
        let mut got = replay_steps(n, &steps).unwrap();
        got.sort();
        assert_eq!(got, expected_blocks(mm, mult).unwrap());
        let firsts = steps.iter().take_while(|s| matches!(s, SimpleStep::First { .. })).count();
        assert!(steps[firsts..].iter().all(|s| matches!(s, SimpleStep::Second { .. })));
        steps
    }

    #[test]
    fn decompose_examples() {
        let n = AlgebraDesc::new(vec![m(1, rat(1, 2), "x"), m(1, rat(1, 2), "y")]);
        let mm = AlgebraDesc::new(vec![m(2, rat(1, 2), "z")]);
        assert_eq!(check_replay(&n, &mm, &[vec![1], vec![1]]), vec![SimpleStep::Second { pair: (0, 1) }]);

        let n = AlgebraDesc::new(vec![m(1, rat(1, 1), "x")]);
        let steps = check_replay(&n, &mm, &[vec![2]]);
        assert_eq!(
            steps,
            vec![
                SimpleStep::First { source: 0, count: 2, weights: vec![rat(1, 2), rat(1, 2)] },
                SimpleStep::Second { pair: (0, 1) }
            ]
        );

        let n = AlgebraDesc::new(vec![m(2, rat(1, 4), "x")]);
        let mm = AlgebraDesc::new(vec![m(2, rat(1, 8), "p"), m(2, rat(1, 8), "q")]);
        assert_eq!(
            check_replay(&n, &mm, &[vec![1, 1]]),
            vec![SimpleStep::First { source: 0, count: 2, weights: vec![rat(1, 8), rat(1, 8)] }]
        );
    }

    #[test]
    fn decompose_rejects_incompatible_inclusions() {
        let n = AlgebraDesc::new(vec![m(1, rat(1, 1), "x")]);
        let mm = AlgebraDesc::new(vec![m(2, rat(1, 2), "z")]);
        assert!(decompose_simple_steps(&n, &mm, &[vec![1]]).is_err());
        assert!(decompose_simple_steps(&n, &mm, &[vec![3]]).is_err());
    }

    #[test]
    fn chain_example() {
        let d = AtomicSubalgebra::abelian([rat(1, 2), rat(1, 2)]);
        let a = AlgebraDesc::new(vec![Summand::diffuse(ExtScalar::one(), "h")]);
        let ea = e(vec![vec![rat(1, 2)], vec![rat(1, 2)]]);
        let (c1, e1) = multimatrix_chain(&a, &d, &ea, 1);
        assert_eq!(c1, AlgebraDesc::new(vec![m(4, rat(1, 4), "h")]));
        assert!(validate_embedding(&d, &c1, &e1).is_ok());
        assert_eq!(multiplicities(&c1, &e1.alloc).unwrap(), vec![vec![2], vec![2]]);

        let atomic = AlgebraDesc::new(vec![m(2, rat(1, 2), "z")]);
        for depth in 1..5 {
            assert_eq!(multimatrix_chain(&atomic, &d, &ea, depth).0, atomic);
        }
    }

    fn chain_instance() -> impl Strategy<Value = (AtomicSubalgebra, AlgebraDesc, EmbeddingSpec)> {
        // Each D-block is spread over up to three summands with dyadic cuts.
        proptest::collection::vec((1i64..4, proptest::collection::vec(0i64..5, 3)), 1..4).prop_filter_map(
            "every summand reached",
            |rows| {
                let mut alloc = Vec::new();
                let mut traces = Vec::new();
                for (scale, cuts) in &rows {
                    let row: Vec<Rational> = cuts.iter().map(|c| rat(*c * *scale, 16)).collect();
                    let t: Rational = row.iter().sum();
                    if t.is_zero() {
                        return None;
                    }
                    traces.push(t);
                    alloc.push(row);
                }
                let sums = EmbeddingSpec::new(alloc.clone()).corner_sums(3);
                if sums.iter().any(Zero::is_zero) {
                    return None;
                }
                let summands = sums
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Summand::diffuse(ExtScalar::Finite(s.clone()), format!("h{i}")))
                    .collect();
                Some((AtomicSubalgebra::abelian(traces), AlgebraDesc::new(summands), EmbeddingSpec::new(alloc)))
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn chain_levels_nest((d, a, ea) in chain_instance()) {
            for depth in 1..=6u32 {
                let (lo, e_lo) = multimatrix_chain(&a, &d, &ea, depth);
                let (hi, e_hi) = multimatrix_chain(&a, &d, &ea, depth + 1);
                prop_assert!(validate_embedding(&d, &lo, &e_lo).is_ok());
                prop_assert!(validate_embedding(&d, &hi, &e_hi).is_ok());
                let mult = chain_step_multiplicities(&lo, &hi);
                check_replay(&lo, &hi, &mult);
                let from_d = AlgebraDesc::from_kinds("d", d.as_algebra("d").summands.into_iter().map(|s| s.kind));
                check_replay(&from_d, &hi, &multiplicities(&hi, &e_hi.alloc).unwrap());
            }
        }

        #[test]
        fn replay_is_sound(shape in proptest::collection::vec(proptest::collection::vec(0u64..3, 1..4), 1..4), sizes in proptest::collection::vec(1u64..3, 4)) {
            // n-blocks C(t_k) -> m-blocks M(M_j; 1/8): any nonzero multiplicity matrix works.
            let cols = shape[0].len();
            let mult: Vec<Vec<u64>> = shape.iter().map(|r| (0..cols).map(|j| *r.get(j).unwrap_or(&0)).collect()).collect();
            prop_assume!(mult.iter().all(|r| r.iter().any(|c| *c > 0)));
            prop_assume!((0..cols).all(|j| mult.iter().any(|r| r[j] > 0)));
            let n = AlgebraDesc::from_kinds("n", mult.iter().enumerate().map(|(k, r)| SummandKind::Matrix {
                size: Size::Finite(sizes[k]),
                minimal_trace: ExtScalar::Finite(rat(r.iter().sum::<u64>() as i64, 8)),
            }));
            let mm = AlgebraDesc::from_kinds("m", (0..cols).map(|j| SummandKind::Matrix {
                size: Size::Finite(mult.iter().zip(&sizes).map(|(r, s)| r[j] * s).sum()),
                minimal_trace: ExtScalar::from_ratio(1, 8),
            }));
            check_replay(&n, &mm, &mult);
            prop_assert_eq!(canonicalize(&mm).total_trace(), n.total_trace());
        }
    }
}
