use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use crossdisp_core::sim::{simulate_dispersion, SimConfig};
use crossdisp_core::synth::BubbleScenario;
use crossdisp_core::{
    cross_sectional_moments, dispersion_series, hill_estimator, normalize_panel, survival_curve,
    CorrelationSpec, MissingDataPolicy,
};

fn pareto_grid(n: usize, alpha: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| ((n + 1 - i) as f64 / (n + 1) as f64).powf(-1.0 / alpha))
        .collect()
}

fn cross_section(c: &mut Criterion) {
    let mut group = c.benchmark_group("cross_section");
    for n in [500usize, 3000, 100_000] {
        let x = pareto_grid(n, 2.5);
        group.bench_with_input(BenchmarkId::new("moments", n), &x, |b, x| {
            b.iter(|| cross_sectional_moments(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hill_k10pct", n), &x, |b, x| {
            b.iter(|| hill_estimator(black_box(x), n / 10).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("survival_curve", n), &x, |b, x| {
            b.iter(|| survival_curve(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn panel_pipeline(c: &mut Criterion) {
    let synthetic = BubbleScenario::default().generate(1);
    let t_ref = synthetic.panel.dates()[0];
    c.bench_function("normalize_and_dispersion_500x400", |b| {
        b.iter(|| {
            let perf = normalize_panel(
                black_box(&synthetic.panel),
                t_ref,
                MissingDataPolicy::DropAtRef,
            )
            .unwrap();
            dispersion_series(&perf)
        })
    });
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_dispersion");
    group.sample_size(10);
    for rho in [0.0, 0.5] {
        let spec = CorrelationSpec::equicorrelated(1000, rho, 1.0).unwrap();
        let cfg = SimConfig::new(spec, 100, 42);
        group.bench_with_input(BenchmarkId::new("n1000_m100", rho), &cfg, |b, cfg| {
            b.iter(|| simulate_dispersion(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cross_section, panel_pipeline, monte_carlo);
criterion_main!(benches);
