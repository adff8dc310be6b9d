use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vna_bench::{diffuse_pair, inverse_square, matrix_pair, Input};
use vna_core::{product_general, ProductOptions};

fn general(x: &Input) {
    let opts = ProductOptions { closed_forms: false, ..ProductOptions::default() };
    black_box(product_general(&x.a, &x.b, &x.d, &x.ea, &x.eb, &opts).expect("bench inputs are valid"));
}

fn bench(c: &mut Criterion) {
    let x = diffuse_pair();
    c.bench_function("diffuse pair", |bn| bn.iter(|| general(&x)));

    let mut g = c.benchmark_group("inverse square chain");
    for n in [3, 6, 9] {
        let x = inverse_square(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |bn, x| bn.iter(|| general(x)));
    }
    g.finish();

    let mut g = c.benchmark_group("matrix pair");
    for n in [2, 3, 4] {
        let x = matrix_pair(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |bn, x| bn.iter(|| general(x)));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
