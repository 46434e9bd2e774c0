//! Parallel vs sequential throughput for the two batch workloads: fitting a
//! chip's worth of sweeps, and a Monte Carlo of TLS fits.
//!
//! `cargo bench -p resq-core` compares the rayon path against the
//! sequential fallback; with `--no-default-features` both arms are
//! sequential.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use resq::batch;
use resq::model::ComplexSweep;
use resq::power::{PowerPoint, PowerSeries};
use resq::synth::{generate_chip, ChipSpec};
use resq::tls::{fit_tls, tls_model};

fn chip_sweeps(n_resonators: usize) -> Vec<ComplexSweep> {
    let spec = ChipSpec { n_resonators, ..ChipSpec::default() };
    generate_chip(&spec).expect("default chip is valid").into_iter().flat_map(|r| r.sweeps).collect()
}

fn bench_fit_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_sweeps");
    group.sample_size(10);
    for n_res in [2, 8] {
        let sweeps = chip_sweeps(n_res);
        group.throughput(Throughput::Elements(sweeps.len() as u64));
        group.bench_with_input(BenchmarkId::new("parallel", sweeps.len()), &sweeps, |b, s| {
            b.iter(|| batch::fit_sweeps(black_box(s)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", sweeps.len()), &sweeps, |b, s| {
            b.iter(|| batch::fit_sweeps_sequential(black_box(s)))
        });
    }
    group.finish();
}

fn tls_trial(seed: u64) -> f64 {
    let (q0, qt, nc) = (2.88e6, 1.07e7, 1.72e3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let pts = (0..12).map(|i| {
        let n = 10f64.powf(6.0 * i as f64 / 11.0);
        let loss = tls_model(n, q0, qt, nc) * (1.0 + 0.02 * z.sample(&mut rng));
        PowerPoint::from_loss(n, 1.0 / loss, None)
    });
    fit_tls(&PowerSeries::from_points("mc", pts)).map_or(f64::NAN, |f| f.q0)
}

fn bench_tls_monte_carlo(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..200).collect();
    let mut group = c.benchmark_group("tls_monte_carlo");
    group.throughput(Throughput::Elements(seeds.len() as u64));
    group.bench_function("parallel", |b| b.iter(|| batch::map(black_box(&seeds), |&s| tls_trial(s))));
    group.bench_function("sequential", |b| b.iter(|| batch::map_sequential(black_box(&seeds), |&s| tls_trial(s))));
    group.finish();
}

criterion_group!(benches, bench_fit_sweeps, bench_tls_monte_carlo);
criterion_main!(benches);
