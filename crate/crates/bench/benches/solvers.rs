use std::hint::black_box;

use adabar::{
    build_null_basis, make_log_orthant, run_ahba, run_sahba, solve_cubic, solve_first_order_kkt, AffineConstraint,
    AhbaConfig, Barrier, CubicInstance, ProblemSpec, SahbaConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

/// Deterministic pseudo-random entries in `[-1, 1]`.
fn entry(i: usize, j: usize, salt: f64) -> f64 {
    ((i as f64 * 12.9898 + j as f64 * 78.233 + salt) * 43758.5453).sin()
}

fn cubic_instance(p: usize) -> CubicInstance {
    let j = DMatrix::from_fn(p, p, |a, b| entry(a.min(b), a.max(b), 1.0));
    let b = DMatrix::from_fn(p, p, |a, c| entry(a, c, 2.0));
    let h = &b * b.transpose() + DMatrix::identity(p, p);
    let g = DVector::from_fn(p, |a, _| entry(a, 0, 3.0));
    CubicInstance::new(g, j, h, 2.0).unwrap()
}

fn cubic(c: &mut Criterion) {
    let mut group = c.benchmark_group("cubic_subproblem");
    for p in [5, 20, 80] {
        let inst = cubic_instance(p);
        group.bench_with_input(BenchmarkId::from_parameter(p), &inst, |b, inst| b.iter(|| solve_cubic(black_box(inst)).unwrap()));
    }
    group.finish();
}

fn kkt(c: &mut Criterion) {
    let mut group = c.benchmark_group("first_order_kkt");
    for (n, m) in [(20, 5), (100, 30)] {
        let a = DMatrix::from_fn(m, n, |i, j| entry(i, j, 4.0));
        let x = DVector::from_fn(n, |i, _| 1.5 + entry(i, 0, 5.0));
        let basis = build_null_basis(&AffineConstraint::new(a.clone(), &a * &x).unwrap()).unwrap();
        let h = make_log_orthant(n).unwrap().hessian(&x);
        let g = DVector::from_fn(n, |i, _| entry(i, 1, 6.0));
        group.bench_function(BenchmarkId::from_parameter(format!("{n}x{m}")), |b| {
            b.iter(|| solve_first_order_kkt(black_box(&h), &basis, black_box(&g)).unwrap())
        });
    }
    group.finish();
}

fn runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_box_qp_n10");
    group.sample_size(20);
    let problem = ProblemSpec::new("box_qp").build().unwrap();
    let basis = problem.basis().unwrap();
    let x0 = problem.initial_point(&basis).unwrap();
    let pot = problem.potential(1.0).unwrap();
    group.bench_function("ahba_eps_1e-2", |b| b.iter(|| run_ahba(&pot, &basis, &x0, &AhbaConfig::new(1e-2)).unwrap()));
    group.bench_function("sahba_eps_1e-2", |b| b.iter(|| run_sahba(&pot, &basis, &x0, &SahbaConfig::new(1e-2)).unwrap()));
    group.finish();
}

criterion_group!(benches, cubic, kkt, runs);
criterion_main!(benches);
