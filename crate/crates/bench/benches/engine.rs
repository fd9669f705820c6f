use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use treecipher::randgen::Scenario;
use treecipher::{ahu, engine, oracle, CipherMode, EngineOptions};
use treecipher_bench::pair;

fn opts() -> EngineOptions {
    EngineOptions {
        validate: false,
        ..EngineOptions::default()
    }
}

fn reduction(c: &mut Criterion) {
    for scenario in [Scenario::Similar, Scenario::Perturbed] {
        let mut group = c.benchmark_group(format!("run/{scenario}"));
        for n in [250usize, 1000, 4000] {
            let (t1, t2) = pair(n, 5, 1, scenario);
            group.throughput(Throughput::Elements(n as u64));
            group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
                b.iter(|| engine::run(black_box(&t1), black_box(&t2), &opts()).map_nodes_calls)
            });
        }
        group.finish();
    }
}

fn coloring(c: &mut Criterion) {
    let mut group = c.benchmark_group("ahu");
    for n in [1000usize, 10_000] {
        let (t1, t2) = pair(n, 5, 2, Scenario::Similar);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("color", n), &n, |b, _| {
            b.iter(|| ahu::color(&[black_box(&t1), black_box(&t2)]).tree_count())
        });
        let colors = ahu::color(&[&t1]);
        group.bench_with_input(BenchmarkId::new("n_equiv", n), &n, |b, _| {
            b.iter(|| ahu::n_equiv_log10(black_box(&t1), colors.colors(0)))
        });
    }
    group.finish();
}

fn completion(c: &mut Criterion) {
    let (t1, t2) = pair(40, 3, 5, Scenario::Similar);
    c.bench_function("decide_complete/40", |b| {
        b.iter(|| {
            oracle::decide_complete(black_box(&t1), black_box(&t2), CipherMode::Bijective).verdict()
        })
    });
    let (s1, s2) = pair(8, 2, 5, Scenario::Perturbed);
    c.bench_function("decide_brute/8", |b| {
        b.iter(|| {
            oracle::decide_brute(
                black_box(&s1),
                black_box(&s2),
                CipherMode::Bijective,
                1_000_000,
            )
            .map(|r| r.0)
        })
    });
}

criterion_group!(benches, reduction, coloring, completion);
criterion_main!(benches);
