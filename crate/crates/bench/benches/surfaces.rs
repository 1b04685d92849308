use std::hint::black_box;

use blackrt::fixtures::{self, Fixture};
use blackrt::properties::{run_checks, Check, CheckConfig, Subject};
use blackrt::{fd, transform, FdConfig, HeatSurface, MarketParams};
use criterion::{criterion_group, criterion_main, Criterion};

fn market() -> MarketParams {
    MarketParams::with_lambda_sq(1.0, 1.0).unwrap()
}

fn heat(c: &mut Criterion) {
    let closed = HeatSurface::closed_form(fixtures::mix23(), market()).unwrap();
    let quad = HeatSurface::quadrature(fixtures::mix23(), market(), 128).unwrap();
    c.bench_function("derivs/closed_form", |b| {
        b.iter(|| closed.derivs(black_box(0.3), 0.5).unwrap())
    });
    c.bench_function("derivs/quadrature_128", |b| {
        b.iter(|| quad.derivs(black_box(0.3), 0.5).unwrap())
    });
    c.bench_function("eval_r/closed_form", |b| {
        b.iter(|| transform::eval_r(&closed, black_box(12.2), 0.5).unwrap())
    });
}

fn surfaces(c: &mut Criterion) {
    let heat = HeatSurface::new(fixtures::mix23(), market()).unwrap();
    let x = blackrt::grid::uniform(0.0, 50.0, 200);
    let t = blackrt::grid::uniform(0.0, 1.0, 50);
    c.bench_function("build_surface/mix23_201x51", |b| {
        b.iter(|| transform::build_surface(&heat, black_box(&x), &t).unwrap())
    });

    let mut group = c.benchmark_group("fd");
    group.sample_size(10);
    for n in [128, 512] {
        let cfg = FdConfig::from_spec(&fixtures::mix23(), 50.0, n, n, 1.0, 1.0).unwrap();
        group.bench_function(format!("solve_black/mix23_{n}"), |b| {
            b.iter(|| fd::solve_black(black_box(&cfg)).unwrap())
        });
    }
    group.finish();
}

fn checks(c: &mut Criterion) {
    let subject = Subject::fixture(Fixture::Mix23);
    let cfg = CheckConfig::new(1.0, 1.0, 20.0, 80, 20);
    let list: Vec<Check> = ["monotonicity", "curvature:expect=convex", "cm_bounds", "zero_set"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    c.bench_function("run_checks/mix23_four", |b| {
        b.iter(|| run_checks(&subject, black_box(&list), &cfg).unwrap())
    });
}

criterion_group!(benches, heat, surfaces, checks);
criterion_main!(benches);
