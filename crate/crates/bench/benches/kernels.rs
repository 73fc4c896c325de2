use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use volscale_bench::daily_fbm;
use volscale_core::fractional::{FgnMethod, FgnSampler};
use volscale_core::moments::{abs_moment, build_loglog, default_tau_grid, Increments};
use volscale_core::noisecal::{smoothing_factor, smoothing_variance_finite};
use volscale_core::rng::stream;
use volscale_core::{DailyProxySeries, ProxyKind, SmoothingSpec};

fn fgn_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("fgn_sample");
    for len in [1usize << 12, 1 << 16, 115_416] {
        let sampler = FgnSampler::new(0.25, len, FgnMethod::CirculantEmbedding).unwrap();
        let mut rng = stream(1, 0);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| black_box(sampler.sample(&mut rng)))
        });
    }
    group.finish();

    c.bench_function("fgn_cholesky_build_2048", |b| {
        b.iter(|| FgnSampler::new(black_box(0.25), 2048, FgnMethod::Cholesky).unwrap())
    });
}

fn moments(c: &mut Criterion) {
    let path = daily_fbm(0.3, 10_000, 7);
    let mut group = c.benchmark_group("abs_moment");
    for tau in [1usize, 50, 1000] {
        group.bench_with_input(BenchmarkId::new("overlapping", tau), &tau, |b, &tau| {
            b.iter(|| abs_moment(black_box(&path), 2.0, tau, Increments::Overlapping).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("k1.5", tau), &tau, |b, &tau| {
            b.iter(|| abs_moment(black_box(&path), 1.5, tau, Increments::Overlapping).unwrap())
        });
    }
    group.finish();

    let series = DailyProxySeries::new(path, ProxyKind::LogVolatility, 1).unwrap();
    let grid = default_tau_grid(series.day_count());
    c.bench_function("build_loglog_10000", |b| {
        b.iter(|| build_loglog(black_box(&series), 2.0, &grid).unwrap())
    });
}

fn smoothing(c: &mut Criterion) {
    let spec = SmoothingSpec {
        hurst: 0.15,
        xi: 1.0,
        d: 1,
        n_samples: 100,
    };
    let mut group = c.benchmark_group("smoothing_variance_finite");
    for tau in [1u32, 10, 100] {
        group.bench_with_input(BenchmarkId::from_parameter(tau), &tau, |b, &tau| {
            b.iter(|| smoothing_variance_finite(black_box(tau), &spec))
        });
    }
    group.finish();

    c.bench_function("smoothing_factor_series", |b| {
        b.iter(|| smoothing_factor(black_box(37.0), black_box(0.15)))
    });
}

criterion_group!(benches, fgn_sampling, moments, smoothing);
criterion_main!(benches);
