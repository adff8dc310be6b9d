//! Product inputs for the benchmarks.

use vna_core::{rat, AlgebraDesc, AtomicSubalgebra, EmbeddingSpec, ExtScalar, Rational, Summand};

pub struct Input {
    pub a: AlgebraDesc,
    pub b: AlgebraDesc,
    pub d: AtomicSubalgebra,
    pub ea: EmbeddingSpec,
    pub eb: EmbeddingSpec,
}

/// Diffuse hyperfinite pieces over consecutive blocks, one summand per group.
fn grouped(prefix: &str, traces: &[Rational], groups: &[Vec<usize>]) -> (AlgebraDesc, EmbeddingSpec) {
    let summands = groups
        .iter()
        .enumerate()
        .map(|(g, ks)| {
            Summand::diffuse(
                ExtScalar::Finite(ks.iter().map(|k| traces[*k].clone()).sum()),
                format!("{prefix}{}", g + 1),
            )
        })
        .collect();
    let alloc = (0..traces.len())
        .map(|k| groups.iter().map(|ks| if ks.contains(&k) { traces[k].clone() } else { rat(0, 1) }).collect())
        .collect();
    (AlgebraDesc::new(summands), EmbeddingSpec::new(alloc))
}

/// `H(1) *_D H(1)` over two half blocks.
pub fn diffuse_pair() -> Input {
    let halves = [rat(1, 2), rat(1, 2)];
    let (a, ea) = grouped("a", &halves, &[vec![0, 1]]);
    let (b, eb) = grouped("b", &halves, &[vec![0, 1]]);
    Input { a, b, d: AtomicSubalgebra::abelian(halves), ea, eb }
}

/// Blocks of trace `1/i` for `i = 1..=n`, paired off as `(1,2), (3,4), ...`
/// on one side and `(1), (2,3), ...` on the other.
pub fn inverse_square(n: usize) -> Input {
    let traces: Vec<Rational> = (1..=n as i64).map(|i| rat(1, i)).collect();
    let a_groups: Vec<Vec<usize>> = (0..n).step_by(2).map(|k| (k..(k + 2).min(n)).collect()).collect();
    let mut b_groups = vec![vec![0]];
    b_groups.extend((1..n).step_by(2).map(|k| (k..(k + 2).min(n)).collect::<Vec<_>>()));
    let (a, ea) = grouped("a", &traces, &a_groups);
    let (b, eb) = grouped("b", &traces, &b_groups);
    Input { a, b, d: AtomicSubalgebra::abelian(traces), ea, eb }
}

/// `M(n; 1/n) *_D M(n; 1/n)` over `n` equal blocks, with the identity
/// embedded diagonally on both sides.
pub fn matrix_pair(n: u64) -> Input {
    let u = rat(1, n as i64);
    let side = || AlgebraDesc::new(vec![Summand::matrix(n, u.clone(), "m")]);
    let e = || EmbeddingSpec::new(vec![vec![u.clone()]; n as usize]);
    Input { a: side(), b: side(), d: AtomicSubalgebra::abelian(vec![u.clone(); n as usize]), ea: e(), eb: e() }
}
