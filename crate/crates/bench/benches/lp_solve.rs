use criterion::{criterion_group, criterion_main, Criterion};
use mspduals::lp::solve_lp;
use mspduals_bench::det_equiv_lp;
use std::hint::black_box;

fn bench_lp(c: &mut Criterion) {
    let small = det_equiv_lp(3, 4);
    let medium = det_equiv_lp(4, 6);
    c.bench_function("det_equiv_T3_N4", |b| {
        b.iter(|| solve_lp(black_box(&small)).unwrap())
    });
    let mut slow = c.benchmark_group("larger");
    slow.sample_size(20);
    slow.bench_function("det_equiv_T4_N6", |b| {
        b.iter(|| solve_lp(black_box(&medium)).unwrap())
    });
    slow.finish();
}

criterion_group!(benches, bench_lp);
criterion_main!(benches);
