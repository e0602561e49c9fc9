use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use interlacement::lattice::Torus;
use interlacement::par::{map_replicas, map_replicas_sequential};
use interlacement::percolation::{components, first_visits, Topology};
use interlacement::rng;
use interlacement::slt::{couple_iid, DenseKernel};

fn vacant_cluster(torus: &Torus, k: usize) -> usize {
    let mut r = rng::replica(7, k as u64);
    let steps = torus.volume() as u64;
    let first = first_visits(torus, steps, &mut r);
    let vacant: Vec<bool> = first.iter().map(|&f| f >= steps).collect();
    components(&vacant, &Topology::Torus(torus.clone())).largest
}

fn walk_replicas(c: &mut Criterion) {
    let torus = Torus::new(3, 16).unwrap();
    let mut g = c.benchmark_group("vacant_clusters");
    for n in [8usize, 32] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| black_box(map_replicas(n, |k| vacant_cluster(&torus, k))))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(map_replicas_sequential(n, |k| vacant_cluster(&torus, k))))
        });
    }
    g.finish();
}

fn coupling_replicas(c: &mut Criterion) {
    let p = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]];
    let k = DenseKernel::new(p, vec![0.3, 0.3, 0.4], vec![1.0, 0.0, 0.0]).unwrap();
    let run = |s: usize| couple_iid(&k, 2000, 0.1, s as u64).map(|c| c.good).unwrap_or(false);
    let mut g = c.benchmark_group("slt_couplings");
    g.bench_function("parallel", |b| b.iter(|| black_box(map_replicas(64, run))));
    g.bench_function("sequential", |b| b.iter(|| black_box(map_replicas_sequential(64, run))));
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = walk_replicas, coupling_replicas
}
criterion_main!(benches);
