use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pweaver_core::inference::{random_problem, solve_exact, solve_heuristic, SolverConfig};

fn heuristic(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("heuristic");
    for n in [14, 28, 56] {
        let p = random_problem(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| solve_heuristic(p, &cfg))
        });
    }
    group.finish();
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    for n in [6, 8, 10] {
        let p = random_problem(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| solve_exact(p, 12).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, heuristic, exact);
criterion_main!(benches);
