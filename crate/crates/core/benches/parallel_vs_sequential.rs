use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pendulum_balance::dynamics::PendulumParams;
use pendulum_balance::par::Execution;
use pendulum_balance::rl::{evaluate, train, ArmSetup, LearningConfig};
use pendulum_balance::sysid::{
    fit_batch, generate_synthetic_encoder_data, Candidate, EncoderSpec, FitConfig, FixedConstants,
};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_evaluate(c: &mut Criterion) {
    let params = PendulumParams::default();
    let arm = ArmSetup::default();
    let cfg = LearningConfig {
        episodes: 3000,
        epsilon_decay_episodes: 2400,
        ..Default::default()
    };
    let table = train(&params, &arm, &cfg).unwrap().table;

    let mut group = c.benchmark_group("evaluate_100_trials");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(black_box(&table), 100, &params, &arm, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_fit_batch(c: &mut Criterion) {
    let p = PendulumParams::default();
    let spec = EncoderSpec {
        duration: 5.0,
        sample_rate: 200.0,
        noise_std: 0.002,
        counts_per_rev: None,
    };
    let traces: Vec<_> = (0..8u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_synthetic_encoder_data(&p, 2.8, 0.0, &spec, &mut rng).unwrap()
        })
        .collect();
    let cfg = FitConfig {
        initial_guess: Candidate {
            inertia: p.inertia * 1.2,
            damping: p.damping * 0.8,
            theta0: 2.8,
            theta_dot0: 0.0,
        },
        max_iterations: 4000,
        tolerance: 1e-9,
        h: None,
    };
    let fixed = FixedConstants::of(&p);

    let mut group = c.benchmark_group("fit_8_traces");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_batch(black_box(&traces), &fixed, &cfg, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_fit_batch);
criterion_main!(benches);
