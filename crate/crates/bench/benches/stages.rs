use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use clustop_bench::{blobs, random_labels};
use clustop_core::cluster::{hdbscan, HdbscanParams};
use clustop_core::dimred::{knn_graph, umap, Metric, UmapParams};
use clustop_core::metrics::{adjusted_mutual_info, ari, silhouette};

fn bench_knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn");
    for n in [500, 1000, 2000] {
        let (x, _) = blobs(n, 50, 5, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| knn_graph(black_box(x), 15, Metric::Euclidean).unwrap())
        });
    }
    g.finish();
}

fn bench_umap(c: &mut Criterion) {
    let mut g = c.benchmark_group("umap");
    g.sample_size(10);
    for n in [500, 1000] {
        let (x, _) = blobs(n, 50, 5, 2);
        let params = UmapParams::default();
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| umap(black_box(x), &params).unwrap())
        });
    }
    g.finish();
}

fn bench_hdbscan(c: &mut Criterion) {
    let mut g = c.benchmark_group("hdbscan");
    g.sample_size(20);
    for n in [500, 1000, 2000] {
        let (y, _) = blobs(n, 2, 5, 3);
        let params = HdbscanParams::new(10);
        g.bench_with_input(BenchmarkId::from_parameter(n), &y, |b, y| {
            b.iter(|| hdbscan(black_box(y), &params).unwrap())
        });
    }
    g.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("metrics");
    let a = random_labels(10_000, 20, 4);
    let t = random_labels(10_000, 20, 5);
    g.bench_function("ari_10k", |b| b.iter(|| ari(black_box(&a), black_box(&t)).unwrap()));
    g.bench_function("ami_10k", |b| b.iter(|| adjusted_mutual_info(black_box(&a), black_box(&t)).unwrap()));
    let (y, labels) = blobs(2000, 2, 5, 6);
    g.bench_function("silhouette_2k", |b| b.iter(|| silhouette(black_box(&y), &labels).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_knn, bench_umap, bench_hdbscan, bench_metrics);
criterion_main!(benches);
