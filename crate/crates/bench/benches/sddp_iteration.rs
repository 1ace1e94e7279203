use criterion::{criterion_group, criterion_main, Criterion};
use mspduals::dual::{run_dual_sddp_penalized, uniform_boxes, DualConfig, PenaltySchedule};
use mspduals::primal::{run_primal_sddp, PrimalConfig};
use mspduals_bench::inventory;
use std::hint::black_box;

fn bench_sddp(c: &mut Criterion) {
    let inst = inventory(10, 10);
    let boxes = uniform_boxes(&inst, 20.0);
    let mut g = c.benchmark_group("sddp");
    g.sample_size(10);
    g.bench_function("primal_20_iterations_T10_N10", |b| {
        b.iter(|| {
            run_primal_sddp(
                black_box(&inst),
                &PrimalConfig {
                    max_iters: 20,
                    gap_tol: 0.0,
                    seed: 3,
                    ..Default::default()
                },
            )
            .unwrap()
        })
    });
    g.bench_function("dual_pen_20_iterations_T10_N10", |b| {
        b.iter(|| {
            run_dual_sddp_penalized(
                black_box(&inst),
                &boxes,
                &PenaltySchedule::constant(1e3),
                &DualConfig {
                    max_iters: 20,
                    seed: 3,
                },
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, bench_sddp);
criterion_main!(benches);
