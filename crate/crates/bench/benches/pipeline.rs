use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use taskcut::matrix::{full_scores, PerformanceMatrix};
use taskcut::metrics::{kendall_tau_b, spearman_rho};
use taskcut::protocols::{run_protocol, Protocol, ProtocolParams};
use taskcut::ridge::loao_r2;
use taskcut::selection::{select_greedy, Strategy};
use taskcut::synthetic::{reference_population, simulate_scaffold_population};

fn reference() -> PerformanceMatrix {
    let (cfg, shifts) = reference_population();
    simulate_scaffold_population(&cfg, &shifts).unwrap().matrix
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [60usize, 1000] {
        // deterministic, tie-heavy inputs
        let a: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 89) as f64).collect();
        group.bench_with_input(BenchmarkId::new("spearman", n), &n, |bench, _| {
            bench.iter(|| spearman_rho(black_box(&a), black_box(&b)))
        });
        group.bench_with_input(BenchmarkId::new("kendall_tau_b", n), &n, |bench, _| {
            bench.iter(|| kendall_tau_b(black_box(&a), black_box(&b)))
        });
    }
    group.finish();
}

fn ridge(c: &mut Criterion) {
    let m = reference();
    let y = full_scores(&m);
    let cols: Vec<usize> = (0..40).collect();
    let rows: Vec<usize> = (0..m.n_agents()).collect();
    let x = m.submatrix(&rows, &cols);
    c.bench_function("loao_r2 60x40", |b| {
        b.iter(|| loao_r2(black_box(x.view()), y.values(), 1.0))
    });
    c.bench_function("greedy k=20 on 60x120", |b| {
        b.iter(|| select_greedy(black_box(m.entries()), y.values(), 20, 1.0))
    });
}

fn protocols(c: &mut Criterion) {
    let m = reference();
    let params = ProtocolParams::default();
    let mut group = c.benchmark_group("run_protocol");
    group.sample_size(10);
    for strategy in [Strategy::Midrange, Strategy::Greedy, Strategy::Random] {
        group.bench_function(BenchmarkId::new("loao", strategy.name()), |b| {
            b.iter(|| run_protocol(&m, Protocol::Loao, strategy, &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, metrics, ridge, protocols);
criterion_main!(benches);
