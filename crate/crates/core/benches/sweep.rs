use cglab::sweep::{run_sweep, run_sweep_sequential, SweepPlan};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn plan() -> SweepPlan {
    SweepPlan {
        kappas: vec![1e2, 1e6],
        orders: vec![50],
        dense_seeds: 4,
        ..SweepPlan::default()
    }
}

fn sweep(c: &mut Criterion) {
    let cases = plan().cases();
    let mut g = c.benchmark_group(format!("sweep_{}_cases", cases.len()));
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| run_sweep(black_box(&cases))));
    g.bench_function("sequential", |b| b.iter(|| run_sweep_sequential(black_box(&cases))));
    g.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
