use vna_core::{
    product, product_general, rat, AdditivityCheck, AlgebraDesc, AtomicSubalgebra, ConvergenceStatus, EmbeddingSpec,
    ExtScalar, ProductOptions, Rational, Schedule, Summand, SummandKind,
};

fn general() -> ProductOptions {
    ProductOptions { closed_forms: false, ..ProductOptions::default() }
}

/// Diffuse summands of `a` cover consecutive D-blocks in `groups`.
fn grouped(d: &[Rational], groups: &[Vec<usize>], prefix: &str) -> (AlgebraDesc, EmbeddingSpec) {
    let summands = groups
        .iter()
        .enumerate()
        .map(|(g, ks)| {
            Summand::diffuse(ks.iter().map(|k| d[*k].clone()).sum::<Rational>().into(), format!("{prefix}{g}"))
        })
        .collect();
    let alloc = (0..d.len())
        .map(|k| groups.iter().map(|ks| if ks.contains(&k) { d[k].clone() } else { rat(0, 1) }).collect())
        .collect();
    (AlgebraDesc::new(summands), EmbeddingSpec::new(alloc))
}

fn harmonic_pattern(n: usize) -> (AlgebraDesc, AlgebraDesc, AtomicSubalgebra, EmbeddingSpec, EmbeddingSpec) {
    let traces: Vec<Rational> = (1..=n as i64).map(|i| rat(1, i)).collect();
    let a_groups: Vec<Vec<usize>> = (0..n).step_by(2).map(|k| (k..(k + 2).min(n)).collect()).collect();
    let mut b_groups = vec![vec![0]];
    b_groups.extend((1..n).step_by(2).map(|k| (k..(k + 2).min(n)).collect::<Vec<_>>()));
    let (a, ea) = grouped(&traces, &a_groups, "a");
    let (b, eb) = grouped(&traces, &b_groups, "b");
    (a, b, AtomicSubalgebra::abelian(traces), ea, eb)
}

#[test]
fn harmonic_chain_is_one_factor() {
    for n in [3usize, 6, 9] {
        let (a, b, d, ea, eb) = harmonic_pattern(n);
        let r = product(&a, &b, &d, &ea, &eb, &ProductOptions::default()).unwrap();
        let s: Rational = (1..=n as i64).map(|i| rat(1, i * i)).sum();
        let t: Rational = (1..=n as i64).map(|i| rat(1, i)).sum();
        assert_eq!(r.algebra.shape(), vec![SummandKind::FreeFactor { s: s.into(), t: t.into() }], "n = {n}");
        assert_eq!(r.additivity_check, AdditivityCheck::Match);
    }
}

#[test]
fn paired_halves_give_diffuse_summands() {
    let d = AtomicSubalgebra::abelian(vec![rat(1, 1); 3]);
    let a = AlgebraDesc::new((0..6).map(|i| Summand::matrix(1, rat(1, 2), format!("a{i}"))).collect());
    let e = EmbeddingSpec::new(
        (0..3).map(|k| (0..6).map(|i| if i / 2 == k { rat(1, 2) } else { rat(0, 1) }).collect()).collect(),
    );
    let r = product(&a, &a, &d, &e, &e, &ProductOptions::default()).unwrap();
    assert_eq!(r.algebra.shape(), vec![SummandKind::DiffuseHyperfinite { total_trace: ExtScalar::one() }; 3]);
    assert_eq!(r.rdim_structural, vdim(0));
    assert_eq!(r.additivity_check, AdditivityCheck::Match);
    assert_eq!(r.convergence.status, ConvergenceStatus::Exact);
}

fn vdim(n: i64) -> vna_core::DimValue {
    vna_core::DimValue::Finite(rat(n, 1))
}

#[test]
fn schedules_agree() {
    let (a, b, d, ea, eb) = harmonic_pattern(4);
    let results: Vec<_> = [Schedule::AThenB, Schedule::BThenA, Schedule::Interleaved]
        .into_iter()
        .map(|schedule| {
            product_general(&a, &b, &d, &ea, &eb, &ProductOptions { schedule, ..general() }).unwrap().algebra.shape()
        })
        .collect();
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0], results[2]);
}

#[test]
fn mixed_matrix_and_diffuse() {
    let d = AtomicSubalgebra::abelian([rat(1, 4), rat(3, 4)]);
    let a =
        AlgebraDesc::new(vec![Summand::matrix(1, rat(1, 4), "p"), Summand::diffuse(ExtScalar::from_ratio(3, 4), "h")]);
    let ea = EmbeddingSpec::new(vec![vec![rat(1, 4), rat(0, 1)], vec![rat(0, 1), rat(3, 4)]]);
    let b = AlgebraDesc::new(vec![Summand::matrix(4, rat(1, 4), "m")]);
    let eb = EmbeddingSpec::new(vec![vec![rat(1, 4)], vec![rat(3, 4)]]);
    let r = product_general(&a, &b, &d, &ea, &eb, &general()).unwrap();
    assert_eq!(r.additivity_check, AdditivityCheck::Match, "{}", r.algebra);
    assert_ne!(r.convergence.status, ConvergenceStatus::BoundsOnly);
}
