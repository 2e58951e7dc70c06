//! Benchmarks for the numeric kernels and the solvers on top of them.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wdrkf_bench::{benchmark_model, seeded_psd};
use wdrkf_core::convergence::{dr_riccati_step, theta_max};
use wdrkf_core::drmmse::{gelbrich_lmo, solve_drmmse, GelbrichBall, SolveOptions};
use wdrkf_core::filters::ss_drkf_solve;
use wdrkf_core::matops::{bures_distance, sqrtm_psd, sym_eig};

fn bench_matrix_kernels(c: &mut Criterion) {
    let a = seeded_psd(4, 1);
    let b = seeded_psd(4, 2);
    c.bench_function("sym_eig_4x4", |bench| {
        bench.iter(|| black_box(sym_eig(a.base()).unwrap()))
    });
    c.bench_function("sqrtm_psd_4x4", |bench| {
        bench.iter(|| black_box(sqrtm_psd(&a).unwrap()))
    });
    c.bench_function("bures_distance_4x4", |bench| {
        bench.iter(|| black_box(bures_distance(&a, &b).unwrap()))
    });
}

fn bench_oracle(c: &mut Criterion) {
    let direction = seeded_psd(4, 3);
    let ball = GelbrichBall::new(seeded_psd(4, 4), 0.8).unwrap();
    c.bench_function("gelbrich_lmo_4x4", |bench| {
        bench.iter(|| black_box(gelbrich_lmo(&direction, &ball, 1e-9).unwrap()))
    });
}

fn bench_worst_case_solve(c: &mut Criterion) {
    let model = benchmark_model();
    let ball_x = GelbrichBall::new(seeded_psd(2, 5), 0.8).unwrap();
    let ball_v = GelbrichBall::new(model.sigma_v().clone(), 0.3).unwrap();
    let opts = SolveOptions::default();
    c.bench_function("solve_drmmse_2x1", |bench| {
        bench.iter(|| black_box(solve_drmmse(&ball_x, &ball_v, model.c(), &opts).unwrap()))
    });

    let prior = seeded_psd(2, 6);
    c.bench_function("dr_riccati_step_2x1", |bench| {
        bench.iter(|| black_box(dr_riccati_step(&prior, &model, 0.8, 0.0, &opts).unwrap()))
    });
}

fn bench_offline_stage(c: &mut Criterion) {
    let model = benchmark_model();
    let mut group = c.benchmark_group("offline");
    group.sample_size(10);
    group.bench_function("ss_drkf_solve_benchmark", |bench| {
        bench.iter(|| black_box(ss_drkf_solve(&model, 1.0, 0.0, 1e-8, 5000).unwrap()))
    });
    group.bench_function("theta_max_benchmark", |bench| {
        bench.iter(|| black_box(theta_max(&model, 20, 8).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_matrix_kernels,
    bench_oracle,
    bench_worst_case_solve,
    bench_offline_stage
);
criterion_main!(benches);
