//! Parallel-vs-sequential throughput of the Monte Carlo kernels.
//!
//! The `parallel` path runs on the default rayon pool; the `sequential`
//! series forces the single-threaded fallback at runtime. Both produce
//! identical results by construction, so the comparison is pure throughput.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use greenmachine::detection::{run_gm_tallies, DetectorModel, Pipeline};
use greenmachine::exec;
use greenmachine::infotheory::HelstromConvention;
use greenmachine::optics::{ChannelModel, GreenMachineConfig};
use greenmachine::receivers::{
    dolinar_error_probability, soft_homodyne_pie, threshold_homodyne_mc, DolinarConfig,
    DriftScenario,
};

fn drifted_pipeline() -> Pipeline {
    Pipeline {
        nbar_tx: 7.5e-3,
        channel: ChannelModel {
            attenuation: 1.0,
            drift_rate_hz: 1e5,
            drift_phase0: 0.0,
        },
        gm: GreenMachineConfig::ideal(3, 20e-9)
            .unwrap()
            .with_crosstalk(0.07)
            .unwrap(),
        detector: DetectorModel {
            efficiency: 0.85,
            dark_per_symbol: 4e-5,
            dead_time: 2e-9,
            guard_band: 10e-9,
            guarded_symbol: 10e-9,
        },
    }
}

fn bench_gm_frames(c: &mut Criterion) {
    // Drift forces the per-frame cascade path (the expensive one).
    let pipeline = drifted_pipeline();
    let mut group = c.benchmark_group("gm_frames_8k");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(run_gm_tallies(&pipeline, 1_000, 7).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::force_sequential(|| black_box(run_gm_tallies(&pipeline, 1_000, 7).unwrap()))
        })
    });
    group.finish();
}

fn bench_dolinar(c: &mut Criterion) {
    let config = DolinarConfig {
        sub_slots: 500,
        convention: HelstromConvention::Standard,
    };
    let mut group = c.benchmark_group("dolinar_20k_trials");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(dolinar_error_probability(0.2, &config, 0.0, 20_000, 7).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::force_sequential(|| {
                black_box(dolinar_error_probability(0.2, &config, 0.0, 20_000, 7).unwrap())
            })
        })
    });
    group.finish();
}

fn bench_baseline_receivers(c: &mut Criterion) {
    let drift = DriftScenario {
        drift_rate_hz: 1e3,
        run_duration: 0.05,
        symbol_duration: 20e-9,
        trials: 400_000,
    };
    let mut group = c.benchmark_group("soft_homodyne_400k");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(soft_homodyne_pie(0.01, &drift, 7).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::force_sequential(|| black_box(soft_homodyne_pie(0.01, &drift, 7).unwrap())))
    });
    group.finish();

    let mut group = c.benchmark_group("threshold_hadamard_50k_codewords");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(threshold_homodyne_mc(0.05, 8, &drift, 7).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::force_sequential(|| black_box(threshold_homodyne_mc(0.05, 8, &drift, 7).unwrap()))
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_gm_frames,
    bench_dolinar,
    bench_baseline_receivers
);
criterion_main!(benches);
