//! Hot-path benchmarks: parsing, composite scoring, advantages, the three
//! objectives, and one full training step on the synthetic task.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use medrl_core::embed::MockEmbedder;
use medrl_core::grouprl::{evaluate_objective, group_advantages, Algorithm, ObjectiveConfig};
use medrl_core::judge::MockJudge;
use medrl_core::reward::{composite_reward, GatingPolicy, RewardContext, RewardWeights};
use medrl_core::structured::{parse_completion, ReferenceAnswer};
use medrl_core::toylab::gradcheck::random_rollout;
use medrl_core::toylab::{train, RewardSettings, SyntheticTask, TabularPolicy, TrainConfig};

fn bench_parse(c: &mut Criterion) {
    let raw = "<X_RAY><think>PA projection reduces cardiac magnification relative to AP, so the silhouette measures smaller.</think><answer>smaller</answer>";
    c.bench_function("parse_completion", |b| {
        b.iter(|| parse_completion(black_box(raw)))
    });
}

fn bench_composite(c: &mut Criterion) {
    let judge = MockJudge::new();
    let embedder = MockEmbedder::default();
    let gate = GatingPolicy::default();
    let ctx = RewardContext {
        weights: RewardWeights::medix(),
        tau: 0.8,
        gate: Some(&gate),
        judge: &judge,
        embedder: &embedder,
    };
    let reference = ReferenceAnswer::parse("<X_RAY> smaller").unwrap();
    let exact = parse_completion("<X_RAY><think>r</think><answer>smaller</answer>");
    let paraphrase =
        parse_completion("<X_RAY><think>r</think><answer>smaller silhouette than AP</answer>");
    c.bench_function("composite_reward/exact_match", |b| {
        b.iter(|| composite_reward(black_box(&exact), &reference, &ctx).unwrap())
    });
    c.bench_function("composite_reward/gateway_path", |b| {
        b.iter(|| composite_reward(black_box(&paraphrase), &reference, &ctx).unwrap())
    });
}

fn bench_advantages(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rewards: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
    c.bench_function("group_advantages/g16", |b| {
        b.iter(|| group_advantages(black_box(&rewards), 1e-6).unwrap())
    });
}

fn bench_objectives(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rollout = random_rollout(&mut rng, 8, 32);
    rollout.compute_advantages(1e-6).unwrap();
    for algorithm in [Algorithm::Grpo, Algorithm::Dapo, Algorithm::Gspo] {
        let cfg = ObjectiveConfig {
            algorithm,
            ..Default::default()
        };
        c.bench_function(&format!("objective/{algorithm}"), |b| {
            b.iter(|| evaluate_objective(black_box(&rollout), &cfg).unwrap())
        });
    }
}

fn bench_train_step(c: &mut Criterion) {
    let task = SyntheticTask::default_task();
    let judge = MockJudge::new();
    let embedder = MockEmbedder::default();
    let cfg = TrainConfig {
        steps: 1,
        ..Default::default()
    };
    c.bench_function("train/one_step", |b| {
        b.iter_batched(
            || TabularPolicy::uniform(&task, 1.0),
            |mut policy| {
                train(
                    &mut policy,
                    &task,
                    &cfg,
                    &RewardSettings::default(),
                    &judge,
                    &embedder,
                )
                .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_parse,
    bench_composite,
    bench_advantages,
    bench_objectives,
    bench_train_step
);
criterion_main!(benches);
