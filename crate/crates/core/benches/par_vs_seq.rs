//! Replica-parallel vs sequential execution on the three Monte Carlo drivers.
//! Both modes produce identical numbers; only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lfpp_core::fpp::{exponent_scan, ScanConfig, ScanMode};
use lfpp_core::geometry::RectRegion;
use lfpp_core::gff::{sample_field, GffSampler, SamplerMode};
use lfpp_core::par::Execution;
use lfpp_core::totalvar::{strategy_experiment, StepPenalty};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn gff_sampling(c: &mut Criterion) {
    let s = GffSampler::new(RectRegion::origin_rect(64, 64).unwrap(), SamplerMode::SparsePrecision).unwrap();
    let mut g = c.benchmark_group("gff_64x64_x64");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(sample_field(&s, 1, 64, exec))));
    }
    g.finish();
}

fn fpp_scan(c: &mut Criterion) {
    let mut g = c.benchmark_group("fpp_scan_32_64");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ScanConfig { exec, bootstrap: 0, ..ScanConfig::new(0.3, vec![32, 64], 16, 3, ScanMode::PointToPoint) };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(exponent_scan(&cfg).unwrap())));
    }
    g.finish();
}

fn uptick_strategy(c: &mut Criterion) {
    let p = StepPenalty::constant(0.2, 1.0).unwrap();
    let mut g = c.benchmark_group("tv_strategy_lambda0.2_x200");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(strategy_experiment(&p, 200, 5, exec).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, gff_sampling, fpp_scan, uptick_strategy);
criterion_main!(benches);
