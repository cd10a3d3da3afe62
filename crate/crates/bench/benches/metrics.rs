use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpsc_core::dp::crp_sample;
use dpsc_core::metrics::{cluster_edit_distance, full_report, variation_of_information};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [100, 1000, 10_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let gold = crp_sample(5.0, n, &mut rng).unwrap();
        let hyp = crp_sample(5.0, n, &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::new("full_report", n), &n, |b, _| {
            b.iter(|| full_report(black_box(&gold), black_box(&hyp)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("edit_distance", n), &n, |b, _| {
            b.iter(|| cluster_edit_distance(black_box(&gold), black_box(&hyp)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("vi", n), &n, |b, _| {
            b.iter(|| variation_of_information(black_box(&gold), black_box(&hyp)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
