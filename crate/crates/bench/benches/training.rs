use std::hint::black_box;

use asddpg_core::trainer::{critic_targets, Learner};
use asddpg_core::{
    Action, NavEnv, NetworkBundle, Observation, SwitchChoice, TrainConfig, Transition, TrunkPreset, WorldSpec,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(world: &WorldSpec, n: usize) -> Vec<Transition> {
    let mut env = NavEnv::new(world.clone(), TrainConfig::default().reward_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut obs = env.reset(0).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut episode = 0;
    while out.len() < n {
        let a = Action::new(rng.random_range(0.0..0.5), rng.random_range(-1.0..1.0));
        let step = env.step(a, SwitchChoice::Policy);
        out.push(Transition {
            x: obs,
            a,
            r: step.reward,
            x_next: step.observation.clone(),
            sigma: SwitchChoice::Policy,
            terminal: step.terminal.is_absorbing(),
        });
        obs = if step.terminal.is_end() {
            episode += 1;
            env.reset(episode).unwrap()
        } else {
            step.observation
        };
    }
    out
}

fn update_step(c: &mut Criterion) {
    let world = WorldSpec::empty();
    let mut group = c.benchmark_group("update_b64");
    group.sample_size(10);
    let owned = batch(&world, 64);
    let transitions: Vec<&Transition> = owned.iter().collect();
    let states: Vec<&Observation> = owned.iter().map(|t| &t.x).collect();
    for trunk in TrunkPreset::ALL {
        let config = TrainConfig {
            trunk,
            ..TrainConfig::default()
        };
        let bundle = NetworkBundle::new(config.net_config(&world), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut learner = Learner::new(bundle, 1e-4, 1e-4);
        group.bench_function(trunk.label(), |b| {
            b.iter(|| {
                let (y_a, y_q) = critic_targets(&transitions, &learner.bundle, 0.99);
                learner.update_critic_dqn(&transitions, &y_a, &y_q).unwrap();
                learner.update_actor(&states).unwrap();
                learner.bundle.soft_update(0.001).unwrap();
            })
        });
    }
    group.finish();
}

fn env_step(c: &mut Criterion) {
    let mut env = NavEnv::new(WorldSpec::complex(), TrainConfig::default().reward_spec()).unwrap();
    let mut seed = 0;
    env.reset(seed).unwrap();
    c.bench_function("env_step_complex", |b| {
        b.iter(|| {
            let out = env.step(black_box(Action::new(0.2, 0.3)), SwitchChoice::Policy);
            if out.terminal.is_end() {
                seed += 1;
                env.reset(seed).unwrap();
            }
        })
    });
}

criterion_group!(benches, update_step, env_step);
criterion_main!(benches);
