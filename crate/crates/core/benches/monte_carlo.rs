use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sattrack::filters::{ckf_predict, ckf_update, mukf_step, solve_are};
use sattrack::harness::{monte_carlo, monte_carlo_sequential, ExperimentConfig};
use sattrack::{Matrix4, MeasurementType, Vector4};

fn bench_monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for runs in [10usize, 100] {
        let cfg = ExperimentConfig { runs, ..Default::default() };
        group.bench_with_input(BenchmarkId::new("sequential", runs), &cfg, |b, cfg| {
            b.iter(|| monte_carlo_sequential(black_box(cfg)).unwrap())
        });
        // falls back to the sequential path without the `parallel` feature
        group.bench_with_input(BenchmarkId::new("parallel", runs), &cfg, |b, cfg| {
            b.iter(|| monte_carlo(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn bench_steps(c: &mut Criterion) {
    let cfg = ExperimentConfig { mtype: MeasurementType::Type2, ..Default::default() };
    let model = cfg.filter_model().unwrap();
    let x = Vector4::new([0.1, 0.0, 0.02, 0.0]);
    let p = Matrix4::scalar(0.1);

    c.bench_function("ckf_step", |b| {
        b.iter(|| {
            let (xp, pp) = ckf_predict(black_box(&x), black_box(&p), &model);
            ckf_update(&xp, &pp, &model, black_box(0.3)).unwrap()
        })
    });
    c.bench_function("mukf_step", |b| {
        b.iter(|| mukf_step(black_box(&x), black_box(&p), &model, black_box(0.3), None).unwrap())
    });
    c.bench_function("expm", |b| b.iter(|| black_box(cfg.transition())));
    c.bench_function("invert", |b| b.iter(|| black_box(cfg.transition()).invert().unwrap()));

    let mut stable = ExperimentConfig { mtype: MeasurementType::Type2, ..Default::default() };
    stable.delta_q = Matrix4::scalar(1e-4);
    let sm = stable.filter_model().unwrap();
    c.bench_function("solve_are_type2_q1e-4", |b| {
        b.iter(|| solve_are(&sm, &Matrix4::scalar(0.1), 1e-12, 100_000).unwrap())
    });
}

criterion_group!(benches, bench_monte_carlo, bench_steps);
criterion_main!(benches);
