use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use batchlab_core::{
    brute_force_sfo_argmin, build_plan, lemma1_bound, run_replicated, run_sgd, ComplexityParams,
    LeastSquares, NoisyQuadratic, RunOptions, ScheduleSpec,
};

fn theory(c: &mut Criterion) {
    let p = ComplexityParams::new(1.0, 1.0, 1.0, 0.1, 0.01).unwrap();
    let model = p.model();
    c.bench_function("critical_batch_size", |b| b.iter(|| black_box(&p).critical_batch_size()));
    c.bench_function("brute_force_sfo_argmin/1e4", |b| {
        b.iter(|| brute_force_sfo_argmin(black_box(&model), 1..=10_000).unwrap())
    });
    let etas = vec![0.1; 10_000];
    let batches: Vec<usize> = (0..10_000).map(|t| 16 + t / 100).collect();
    c.bench_function("lemma1_bound/1e4", |b| {
        b.iter(|| lemma1_bound(1.0, 1.0, 1.0, black_box(&etas), black_box(&batches)).unwrap())
    });
}

fn plans(c: &mut Criterion) {
    let spec = ScheduleSpec::exp_bs_exp_lr(16, 2.0, 0.1, 1.4, 10, 2);
    c.bench_function("build_plan/exp_10_stages", |b| b.iter(|| build_plan(black_box(&spec), 50_000).unwrap()));
}

fn engine(c: &mut Criterion) {
    let quad = NoisyQuadratic::isotropic(10, 1.0, 1.0).unwrap();
    let ls = LeastSquares::new(1024, 10, 0).unwrap();
    let plan = build_plan(&ScheduleSpec::exp_bs(16, 2.0, 0.05, 4, 1), 1024).unwrap();

    let mut group = c.benchmark_group("run_sgd");
    for cadence in [1u64, 10] {
        let opts = RunOptions::new(0).with_cadence(cadence);
        group.bench_with_input(BenchmarkId::new("noisy_quadratic", cadence), &opts, |b, o| {
            b.iter(|| run_sgd(&quad, &plan, o).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("least_squares", cadence), &opts, |b, o| {
            b.iter(|| run_sgd(&ls, &plan, o).unwrap())
        });
    }
    group.finish();

    let seeds: Vec<u64> = (0..30).collect();
    c.bench_function("run_replicated/noisy_quadratic_30_seeds", |b| {
        b.iter(|| run_replicated(&quad, &plan, &seeds, &RunOptions::new(0)).unwrap())
    });
}

criterion_group!(benches, theory, plans, engine);
criterion_main!(benches);
