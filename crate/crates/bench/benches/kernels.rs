use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use parea_bench::{check_u, contact, disc_problem, pauls, sampled};
use parea_core::functional::{flux_residual, p_area};
use parea_core::geometry::{trace_ray, TraceOptions};
use parea_core::grid::{apply_boundary, build_layout};
use parea_core::solver::newton_solve;
use parea_core::{CurvatureSpec, ScalarFieldGrid, SolveConfig};

fn energy(c: &mut Criterion) {
    let field = contact();
    let zero = CurvatureSpec::zero();
    let s = pauls();
    let mut g = c.benchmark_group("p_area");
    for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let u = sampled(&s, h);
        g.bench_with_input(BenchmarkId::from_parameter(h), &u, |b, u| {
            b.iter(|| p_area(black_box(u), &field, &zero).unwrap())
        });
    }
    g.finish();

    let u = sampled(&check_u(), 1.0 / 64.0);
    c.bench_function("flux_residual check-u h=1/64", |b| {
        b.iter(|| flux_residual(black_box(&u), &field).unwrap())
    });
}

fn newton(c: &mut Criterion) {
    let field = contact();
    let zero = CurvatureSpec::zero();
    let (domain, data) = disc_problem();
    let layout = build_layout(&domain, 1.0 / 32.0).unwrap();
    let mut u = ScalarFieldGrid::zeros(layout);
    apply_boundary(&mut u, &data, 1.0).unwrap();
    let cfg = SolveConfig::default();
    let mut g = c.benchmark_group("newton_stage");
    g.sample_size(10);
    g.bench_function("disc h=1/32 eps=1", |b| {
        b.iter(|| newton_solve(black_box(&u), &field, &zero, 1.0, 1.0, &cfg).unwrap())
    });
    g.finish();
}

fn geometry(c: &mut Criterion) {
    let field = contact();
    let s = check_u();
    c.bench_function("trace_ray check-u", |b| {
        b.iter(|| trace_ray(&s, &field, &s.domain, black_box([0.2, -0.3]), TraceOptions::new(1e-7, 0.005)).unwrap())
    });
    c.bench_function("check-u value", |b| b.iter(|| s.value(black_box([0.31, -0.47]))));
}

criterion_group!(kernels, energy, newton, geometry);
criterion_main!(kernels);
