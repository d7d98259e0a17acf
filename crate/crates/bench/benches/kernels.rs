use std::hint::black_box;

use ailab_core::rng::rng_from_seed;
use ailab_core::{
    loss_and_grad, rebuild_index, rollout, Backend, EnvConfig, EnvKind, ExpertDataset, NoveltyConfig, PolicyParams,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng as _;

fn dataset(n: usize, dim: usize) -> ExpertDataset {
    let mut rng = rng_from_seed(1);
    let mut d = ExpertDataset::new(dim, 1);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        d.push(&x, &[0.0]).unwrap();
    }
    d.freeze_standardizer();
    d
}

fn novelty(c: &mut Criterion) {
    let mut g = c.benchmark_group("novelty_batch_200");
    let mut rng = rng_from_seed(2);
    let queries: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for n in [1_000, 10_000] {
        let d = dataset(n, 4);
        for backend in [Backend::BruteForce, Backend::KdTree] {
            let cfg = NoveltyConfig { k: 5, standardize: true, backend };
            let idx = rebuild_index(&d, &cfg).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("{backend:?}"), n), &idx, |b, idx| {
                b.iter(|| idx.score_batch(black_box(&queries), 5).unwrap())
            });
        }
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let mut rng = rng_from_seed(3);
    let params = PolicyParams::random(4, 64, 2, 0.3, &mut rng);
    let x: Vec<f64> = (0..64 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..64 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("loss_and_grad_batch64", |b| {
        b.iter(|| loss_and_grad(black_box(&params), &x, &y).unwrap())
    });
}

fn episode(c: &mut Criterion) {
    let env = EnvConfig::new(EnvKind::Pendulum);
    let (e, x) = (env.build(), env.expert());
    c.bench_function("pendulum_expert_rollout", |b| {
        b.iter(|| rollout(e.as_ref(), x.as_ref(), black_box(7)).unwrap())
    });
}

criterion_group!(benches, novelty, gradient, episode);
criterion_main!(benches);
