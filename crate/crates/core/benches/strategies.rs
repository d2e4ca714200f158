use std::path::Path;

use bishop_core::harness::{baseline, evaluate, Corpus};
use bishop_core::par::Strategy;
use bishop_core::resolution::Engine;
use bishop_core::scene::generate_scene;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const STRATEGIES: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn bench_baseline(c: &mut Criterion) {
    let mut group = c.benchmark_group("baseline");
    for (name, strategy) in STRATEGIES {
        group.bench_function(BenchmarkId::new(name, 10_000), |b| {
            b.iter(|| baseline(10_000, 30, 30, 1, strategy).unwrap())
        });
    }
    group.finish();
}

fn bench_corpus(c: &mut Criterion) {
    let corpus = Corpus::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/regression_corpus.jsonl")).unwrap();
    let engine = Engine::packaged();
    let mut group = c.benchmark_group("corpus_eval");
    group.sample_size(20);
    for (name, strategy) in STRATEGIES {
        group.bench_function(name, |b| b.iter(|| evaluate(&corpus, &engine, 0, strategy).unwrap()));
    }
    group.finish();
}

fn bench_scene_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("scene_batch");
    group.sample_size(20);
    for (name, strategy) in STRATEGIES {
        group.bench_function(BenchmarkId::new(name, 64), |b| {
            b.iter(|| strategy.map_range(64, |i| generate_scene(i as u64, 30).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_baseline, bench_corpus, bench_scene_batch);
criterion_main!(benches);
