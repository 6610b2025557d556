use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use jumpdiff_bench::{operator_1d, operator_2d, tanh_layer};
use jumpdiff_core::quadrature::cutoff_for;
use jumpdiff_core::{apply_l, build_quadrature, solve_layer, Grid, Grid1D, KernelSpec, Nonlinearity};

fn bench_build_quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_quadrature");
    for alpha in [0.5, 1.0, 1.5] {
        let grid: Grid = Grid1D::new(20.0, 401).unwrap().into();
        let spec = KernelSpec::fractional(1, alpha);
        let cutoff = cutoff_for(&spec, grid.spacing().0, 40.0);
        group.bench_with_input(BenchmarkId::new("fractional_1d", alpha), &alpha, |b, _| {
            b.iter(|| build_quadrature(black_box(&spec), &grid, cutoff).unwrap())
        });
    }
    group.finish();
}

fn bench_apply_l(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_l");
    for points in [401, 1601] {
        let (grid, op) = operator_1d(1.0, 20.0, points, 1.0);
        let u = tanh_layer(grid);
        group.bench_with_input(BenchmarkId::new("fractional_1d", points), &points, |b, _| {
            b.iter(|| apply_l(black_box(&u), &op.quadrature).unwrap())
        });
    }
    let (grid, op) = operator_2d(8.0, 33, 1.0, 0.5);
    let u = tanh_layer(grid);
    group.bench_function("truncated_2d_33", |b| b.iter(|| apply_l(black_box(&u), &op.quadrature).unwrap()));
    group.finish();
}

fn bench_solve_layer(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_layer");
    group.sample_size(10);
    let nl = Nonlinearity::allen_cahn();
    for (label, cc) in [("local", 0.0), ("mixed", 0.5)] {
        let (grid, op) = operator_1d(1.0, 20.0, 401, cc);
        let init = tanh_layer(grid);
        group.bench_function(label, |b| b.iter(|| solve_layer(&op, &nl, black_box(&init), 1e-10).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_build_quadrature, bench_apply_l, bench_solve_layer);
criterion_main!(benches);
