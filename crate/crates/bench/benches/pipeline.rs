use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decomp_core::{
    analyze, build_system, infer, matvec, star_closure, AnalyzeOptions, BoolMatrix, Nonlinearity,
    RealMatrix, RealVector, Weights,
};

fn random_graph(n: usize, density: f64, seed: u64) -> BoolMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BoolMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                m.set(i, j, true);
            }
        }
    }
    m
}

fn random_block_weights(n: usize, blocks: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && (i * blocks / n) == (j * blocks / n) && rng.gen_bool(0.5) {
                w.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    w
}

fn bench_closure(c: &mut Criterion) {
    let mut group = c.benchmark_group("star_closure");
    for &n in &[256usize, 1024] {
        let m = random_graph(n, 2.0 / n as f64, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| star_closure(m).unwrap())
        });
    }
    group.finish();
}

fn bench_analyze(c: &mut Criterion) {
    let mut group = c.benchmark_group("analyze");
    for &n in &[256usize, 1024] {
        let m = random_graph(n, 2.0 / n as f64, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| analyze(m, &AnalyzeOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_infer(c: &mut Criterion) {
    let mut group = c.benchmark_group("infer_vs_dense");
    for &n in &[256usize, 1024] {
        let w = random_block_weights(n, 8, 3);
        let adj = decomp_core::p_adjacency(&w).unwrap();
        let result = analyze(&adj, &AnalyzeOptions::default()).unwrap();
        let sys = build_system(&Weights::Scalar(w.clone()), &result, Nonlinearity::Identity)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x =
            RealVector::from_entries((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        group.bench_with_input(BenchmarkId::new("routed", n), &(&sys, &x), |b, (sys, x)| {
            b.iter(|| infer(sys, x).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense", n), &(&w, &x), |b, (w, x)| {
            b.iter(|| matvec(w, x).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_closure, bench_analyze, bench_infer);
criterion_main!(benches);
