//! The assisted training loop: switching action selection, joint critic/DQN
//! regression, advantage policy gradient and soft target tracking. Plain DDPG
//! is the same loop with the switch branch removed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controller::{p_control, PGains};
use crate::error::{Error, Result};
use crate::networks::{
    greedy_switch, select_switch, Action, Actor, CriticDqn, NetConfig, NetworkBundle, Observation,
    SwitchChoice, TrunkPreset,
};
use crate::replay::{ReplayBuffer, Transition};
use crate::tensor::{AdamConfig, OptimizerState};
use crate::world::{eval_metric, NavEnv, Pose, RewardKind, RewardSpec, Terminal, WorldSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Asddpg,
    Ddpg,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Asddpg => "asddpg",
            Algorithm::Ddpg => "ddpg",
        }
    }
}

/// Mean-reverting exploration noise parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Mean-reversion rate per step.
    pub theta: f64,
    /// Volatility, in units of the action half-range.
    pub sigma: f64,
    /// Noise scale reached at the end of training (linear anneal from 1).
    pub final_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma: 0.2,
            final_scale: 0.1,
        }
    }
}

/// Linear anneal of the switch exploration rate over the first `fraction` of
/// training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 0.01,
            fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, progress: f64) -> f64 {
        if self.fraction <= 0.0 {
            return self.end;
        }
        let p = (progress / self.fraction).clamp(0.0, 1.0);
        if p >= 1.0 {
            return self.end;
        }
        self.start + (self.end - self.start) * p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub reward: RewardKind,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub noise: NoiseConfig,
    pub switch_epsilon: EpsilonSchedule,
    /// Episode count `M`.
    pub episodes: usize,
    /// Optional budget in environment steps; no new episode starts once it is
    /// reached.
    pub max_steps: Option<u64>,
    /// Overrides the world's episode horizon `T`.
    pub horizon: Option<usize>,
    pub gains: PGains,
    pub trunk: TrunkPreset,
    /// Explicit hidden widths; takes precedence over `trunk`.
    pub hidden: Option<Vec<usize>>,
    pub seed: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub learning_starts: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub v_max: f64,
    pub omega_max: f64,
    /// `γ_p` for controller steps with positive dense reward.
    pub controller_discount: f64,
    /// Log every n-th training episode's trajectory; 0 disables the log.
    pub trajectory_every: usize,
    /// Intermediate checkpoint cadence in steps; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Asddpg,
            reward: RewardKind::Dense,
            gamma: 0.99,
            tau: 0.001,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            noise: NoiseConfig::default(),
            switch_epsilon: EpsilonSchedule::default(),
            episodes: 1000,
            max_steps: None,
            horizon: None,
            gains: PGains::MODERATE,
            trunk: TrunkPreset::TwoBy100,
            hidden: None,
            seed: 0,
            batch_size: 64,
            replay_capacity: 100_000,
            learning_starts: 1000,
            eval_interval: 2000,
            eval_episodes: 20,
            v_max: 0.5,
            omega_max: 1.0,
            controller_discount: 0.5,
            trajectory_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.episodes == 0 || self.eval_interval == 0 {
            return bad("batch_size, episodes and eval_interval must be positive".into());
        }
        let e = &self.switch_epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) || e.end > e.start || e.fraction < 0.0 {
            return bad(format!("switch_epsilon must anneal downward within [0, 1], got {e:?}"));
        }
        let n = &self.noise;
        if n.theta < 0.0 || n.sigma < 0.0 || !(0.0..=1.0).contains(&n.final_scale) {
            return bad(format!("invalid noise parameters {n:?}"));
        }
        if !(0.0..=1.0).contains(&self.controller_discount) {
            return bad("controller_discount must lie in [0, 1]".into());
        }
        self.gains.validate()
    }

    pub fn reward_spec(&self) -> RewardSpec {
        let base = match self.reward {
            RewardKind::Dense => RewardSpec::dense(),
            RewardKind::Sparse => RewardSpec::sparse(),
        };
        RewardSpec {
            controller_discount: self.controller_discount,
            ..base
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| self.trunk.hidden())
    }

    pub fn net_config(&self, world: &WorldSpec) -> NetConfig {
        NetConfig {
            beams: world.scan.beams,
            stack: world.scan.stack,
            conv: NetConfig::default_conv(),
            hidden: self.hidden_sizes(),
            v_max: self.v_max,
            omega_max: self.omega_max,
            max_range: world.scan.max_range,
            distance_scale: world.diagonal(),
            dueling_switch: self.algorithm == Algorithm::Asddpg,
        }
    }

    /// World with the horizon override applied.
    pub fn effective_world(&self, world: &WorldSpec) -> WorldSpec {
        let mut w = world.clone();
        if let Some(h) = self.horizon {
            w.horizon = h;
        }
        w
    }

    /// Steps over which schedules anneal.
    pub fn schedule_length(&self, world: &WorldSpec) -> u64 {
        let by_episodes = (self.episodes * self.effective_world(world).horizon) as u64;
        self.max_steps.map_or(by_episodes, |m| m.min(by_episodes)).max(1)
    }
}

// ---------------------------------------------------------------------------
// Exploration

/// Temporally correlated noise, one process per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub state: [f64; 2],
}

impl OuNoise {
    pub fn new(config: &NoiseConfig) -> Self {
        Self {
            theta: config.theta,
            sigma: config.sigma,
            state: [0.0; 2],
        }
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }

    /// Advances the process and returns its new value.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; 2] {
        for x in &mut self.state {
            let n: f64 = rng.sample(StandardNormal);
            *x += -self.theta * *x + self.sigma * n;
        }
        self.state
    }
}

pub struct Explorer {
    pub noise: OuNoise,
    /// Multiplier on the noise process output.
    pub noise_scale: f64,
    pub switch_epsilon: f64,
    pub rng: ChaCha8Rng,
}

pub enum ActMode<'a> {
    Train { explorer: &'a mut Explorer, switching: bool },
    /// Noise-free actor only; the controller is never consulted.
    Eval,
}

/// Chooses the branch and the command for one step.
pub fn act(obs: &Observation, bundle: &NetworkBundle, gains: PGains, mode: ActMode<'_>) -> (Action, SwitchChoice) {
    let (v_max, omega_max) = (bundle.config.v_max, bundle.config.omega_max);
    match mode {
        ActMode::Eval => (bundle.actor.forward(obs), SwitchChoice::Policy),
        ActMode::Train { explorer, switching } => {
            let sigma = if switching && bundle.critic.has_switch() {
                let q = bundle.critic.dqn_forward(obs).q_switch;
                select_switch(q, explorer.switch_epsilon, &mut explorer.rng)
            } else {
                SwitchChoice::Policy
            };
            match sigma {
                SwitchChoice::Policy => {
                    let a = bundle.actor.forward(obs);
                    let n = explorer.noise.sample(&mut explorer.rng);
                    let s = explorer.noise_scale;
                    let noisy = Action::new(a.v + s * n[0] * 0.5 * v_max, a.omega + s * n[1] * omega_max);
                    (noisy.clamped(v_max, omega_max), sigma)
                }
                SwitchChoice::Controller => (p_control(obs.target_local, gains, v_max, omega_max), sigma),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Losses and updates

/// Bellman targets `(y^A, y^Q)` for a batch. `y^Q` uses the online switch
/// branch to pick σ and the target branch to value it. Absorbing transitions
/// do not bootstrap. Without a switch branch `y^Q` equals `y^A`.
pub fn critic_targets(batch: &[&Transition], bundle: &NetworkBundle, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut y_a = Vec::with_capacity(batch.len());
    let mut y_q = Vec::with_capacity(batch.len());
    let switching = bundle.critic.has_switch();
    for t in batch {
        if t.terminal {
            y_a.push(t.r);
            y_q.push(t.r);
            continue;
        }
        let a_next = bundle.target_actor.forward(&t.x_next);
        let target = bundle.target_critic.forward_cached(&t.x_next, Some(a_next), switching);
        let ya = t.r + gamma * target.q_a;
        y_a.push(ya);
        if switching {
            let best = greedy_switch(bundle.critic.dqn_forward(&t.x_next).q_switch);
            y_q.push(t.r + gamma * target.q_switch[best.index()]);
        } else {
            y_q.push(ya);
        }
    }
    (y_a, y_q)
}

/// Joint TD loss `(1/N)·Σ[(y^A − Q^A(x,a))² + (y^Q − Q(x,σ))²]` without
/// touching gradients.
pub fn critic_dqn_loss(critic: &CriticDqn, batch: &[&Transition], y_a: &[f64], y_q: &[f64]) -> f64 {
    let switching = critic.has_switch();
    let mut sum = 0.0;
    for ((t, ya), yq) in batch.iter().zip(y_a).zip(y_q) {
        let c = critic.forward_cached(&t.x, Some(t.a), switching);
        sum += (ya - c.q_a).powi(2);
        if switching {
            sum += (yq - c.q_switch[t.sigma.index()]).powi(2);
        }
    }
    sum / batch.len() as f64
}

/// Same loss, accumulating its gradient into the critic's parameters.
pub fn critic_dqn_loss_and_grads(critic: &mut CriticDqn, batch: &[&Transition], y_a: &[f64], y_q: &[f64]) -> f64 {
    let switching = critic.has_switch();
    let n = batch.len() as f64;
    let mut sum = 0.0;
    for ((t, ya), yq) in batch.iter().zip(y_a).zip(y_q) {
        let c = critic.forward_cached(&t.x, Some(t.a), switching);
        let e_a = c.q_a - ya;
        sum += e_a * e_a;
        let mut d_q = [0.0; 2];
        if switching {
            let e_q = c.q_switch[t.sigma.index()] - yq;
            sum += e_q * e_q;
            d_q[t.sigma.index()] = 2.0 * e_q / n;
        }
        critic.backward(&c, 2.0 * e_a / n, d_q);
    }
    sum / n
}

/// Anything that can score an action and differentiate that score w.r.t. the
/// action.
pub trait AdvantageCritic {
    fn advantage_with_grad(&self, obs: &Observation, action: Action) -> (f64, [f64; 2]);
}

impl AdvantageCritic for CriticDqn {
    fn advantage_with_grad(&self, obs: &Observation, action: Action) -> (f64, [f64; 2]) {
        self.advantage_action_grad(obs, action)
    }
}

/// Batch-mean advantage of the actor's own actions.
pub fn actor_objective<C: AdvantageCritic + ?Sized>(actor: &Actor, critic: &C, batch: &[&Observation]) -> f64 {
    let sum: f64 = batch
        .iter()
        .map(|obs| critic.advantage_with_grad(obs, actor.forward(obs)).0)
        .sum();
    sum / batch.len() as f64
}

/// Accumulates the gradient of `−objective` into the actor (descent on it is
/// ascent on the advantage) and returns the objective.
pub fn actor_objective_and_grads<C: AdvantageCritic + ?Sized>(
    actor: &mut Actor,
    critic: &C,
    batch: &[&Observation],
) -> f64 {
    let n = batch.len() as f64;
    let mut sum = 0.0;
    for obs in batch {
        let cache = actor.forward_cached(obs);
        let (adv, grad) = critic.advantage_with_grad(obs, cache.action);
        sum += adv;
        actor.backward(&cache, [-grad[0] / n, -grad[1] / n]);
    }
    sum / n
}

/// Online networks with their optimizers.
#[derive(Clone, Debug)]
pub struct Learner {
    pub bundle: NetworkBundle,
    pub actor_opt: Vec<OptimizerState>,
    pub critic_opt: Vec<OptimizerState>,
}

impl Learner {
    pub fn new(bundle: NetworkBundle, actor_lr: f64, critic_lr: f64) -> Self {
        let actor_opt = bundle
            .actor
            .params()
            .into_iter()
            .map(|p| OptimizerState::new(p, AdamConfig::with_lr(actor_lr)))
            .collect();
        let critic_opt = bundle
            .critic
            .params()
            .into_iter()
            .map(|p| OptimizerState::new(p, AdamConfig::with_lr(critic_lr)))
            .collect();
        Self {
            bundle,
            actor_opt,
            critic_opt,
        }
    }

    /// One optimizer step on the joint TD loss; returns the loss.
    pub fn update_critic_dqn(&mut self, batch: &[&Transition], y_a: &[f64], y_q: &[f64]) -> Result<f64> {
        let critic = &mut self.bundle.critic;
        for p in critic.params_mut() {
            p.zero_grads();
        }
        let loss = critic_dqn_loss_and_grads(critic, batch, y_a, y_q);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                param: "critic-dqn loss".into(),
            });
        }
        for (p, opt) in critic.params_mut().into_iter().zip(&mut self.critic_opt) {
            opt.apply(p)?;
        }
        Ok(loss)
    }

    /// One ascent step on the batch-mean advantage; the critic is read only.
    pub fn update_actor(&mut self, batch: &[&Observation]) -> Result<f64> {
        update_actor(&mut self.bundle.actor, &mut self.actor_opt, &self.bundle.critic, batch)
    }
}

pub fn update_actor<C: AdvantageCritic + ?Sized>(
    actor: &mut Actor,
    opt: &mut [OptimizerState],
    critic: &C,
    batch: &[&Observation],
) -> Result<f64> {
    for p in actor.params_mut() {
        p.zero_grads();
    }
    let objective = actor_objective_and_grads(actor, critic, batch);
    for (p, o) in actor.params_mut().into_iter().zip(opt.iter_mut()) {
        o.apply(p)?;
    }
    Ok(objective)
}

// ---------------------------------------------------------------------------
// Training loop

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Cumulative environment steps at the end of the episode.
    pub step: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// Most recent evaluation score, if any evaluation has run.
    pub eval_metric: Option<f64>,
    pub usage_ratio: f64,
    pub outcome: Terminal,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub episode: usize,
    pub mean_metric: f64,
    pub reach_rate: f64,
    pub crash_rate: f64,
    pub timeout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode: usize,
    /// 0 is the reset pose; row `k` is the pose after step `k`.
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub sigma: Option<SwitchChoice>,
    pub reward: f64,
    pub terminal: Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub total_steps: u64,
    pub final_reach_rate: Option<f64>,
    pub final_eval_metric: Option<f64>,
    pub mean_eval_metric: Option<f64>,
    /// First evaluation step from which three consecutive evaluations all
    /// reach the goal at least 80% of the time.
    pub steps_to_sustained_80: Option<u64>,
    /// Mean policy-usage ratio over the last 10% of episodes.
    pub final_usage_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub world: WorldSpec,
    pub episodes: Vec<EpisodeRecord>,
    pub evals: Vec<EvalRecord>,
    pub trajectories: Vec<TrajectoryRow>,
    pub bundle: NetworkBundle,
    pub summary: RunSummary,
}

/// Training stopped on a non-finite update. Carries the last parameters that
/// passed an evaluation.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_stable: Option<Box<NetworkBundle>>,
    pub episodes_completed: usize,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} episodes", self.error, self.episodes_completed)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            last_stable: None,
            episodes_completed: 0,
        }
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_EXPLORE: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const SEED_TRAIN_EPISODE: u64 = 0x7472_6169_6e00_0000;
const SEED_EVAL_EPISODE: u64 = 0x6576_616c_0000_0000;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub mean_metric: f64,
    pub reach_rate: f64,
    pub crash_rate: f64,
    pub timeout_rate: f64,
}

/// Noise-free, policy-only rollouts on the given episode seeds.
pub fn evaluate(bundle: &NetworkBundle, world: &WorldSpec, seeds: &[u64]) -> Result<EvalResult> {
    let mut env = NavEnv::new(world.clone(), RewardSpec::sparse())?;
    let mut counts = [0usize; 3];
    let mut metric = 0.0;
    for &seed in seeds {
        let mut obs = env.reset(seed)?;
        loop {
            let (a, sigma) = act(&obs, bundle, PGains::MODERATE, ActMode::Eval);
            let out = env.step(a, sigma);
            obs = out.observation;
            match out.terminal {
                Terminal::None => continue,
                Terminal::Reach => counts[0] += 1,
                Terminal::Crash => counts[1] += 1,
                Terminal::Timeout => counts[2] += 1,
            }
            metric += eval_metric(env.steps(), out.terminal == Terminal::Reach);
            break;
        }
    }
    let n = seeds.len().max(1) as f64;
    Ok(EvalResult {
        mean_metric: metric / n,
        reach_rate: counts[0] as f64 / n,
        crash_rate: counts[1] as f64 / n,
        timeout_rate: counts[2] as f64 / n,
    })
}

pub fn eval_seeds(run_seed: u64, eval_index: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|j| mix_seed(run_seed ^ SEED_EVAL_EPISODE, (eval_index << 20) | j))
        .collect()
}

/// Runs the full loop for `config` on `world`.
pub fn train(config: &TrainConfig, world: &WorldSpec) -> std::result::Result<RunArtifacts, TrainFailure> {
    train_with(config, world, &mut |_, _| Ok(()))
}

/// [`train`], handing the online and target networks to `on_checkpoint`
/// every `checkpoint_every` steps.
pub fn train_with(
    config: &TrainConfig,
    world: &WorldSpec,
    on_checkpoint: &mut dyn FnMut(u64, &NetworkBundle) -> Result<()>,
) -> std::result::Result<RunArtifacts, TrainFailure> {
    config.validate()?;
    let world = config.effective_world(world);
    world.validate()?;

    let net = config.net_config(&world);
    let bundle = NetworkBundle::new(net, &mut stream(config.seed, STREAM_INIT))?;
    let mut learner = Learner::new(bundle, config.actor_lr, config.critic_lr);
    let mut env = NavEnv::new(world.clone(), config.reward_spec())?;
    let mut replay = ReplayBuffer::new(config.replay_capacity)?;
    let mut explorer = Explorer {
        noise: OuNoise::new(&config.noise),
        noise_scale: 1.0,
        switch_epsilon: config.switch_epsilon.start,
        rng: stream(config.seed, STREAM_EXPLORE),
    };
    let mut replay_rng = stream(config.seed, STREAM_REPLAY);
    let switching = config.algorithm == Algorithm::Asddpg;
    let schedule = config.schedule_length(&world) as f64;
    let warmup = config.learning_starts.max(config.batch_size);

    let mut episodes = Vec::new();
    let mut evals: Vec<EvalRecord> = Vec::new();
    let mut trajectories = Vec::new();
    let mut last_stable = Some(Box::new(learner.bundle.clone()));
    let mut step: u64 = 0;

    let fail = |error: Error, last_stable: &Option<Box<NetworkBundle>>, done: usize| TrainFailure {
        error,
        last_stable: last_stable.clone(),
        episodes_completed: done,
    };

    for episode in 0..config.episodes {
        if config.max_steps.is_some_and(|m| step >= m) {
            break;
        }
        let seed = mix_seed(config.seed ^ SEED_TRAIN_EPISODE, episode as u64);
        let mut obs = env.reset(seed).map_err(|e| fail(e, &last_stable, episode))?;
        explorer.noise.reset();
        let log = config.trajectory_every > 0 && episode % config.trajectory_every == 0;
        if log {
            trajectories.push(trajectory_row(episode, 0, &env.state().pose, Action::default(), None, 0.0, Terminal::None));
        }

        let mut ret = 0.0;
        let mut policy_steps = 0usize;
        let outcome = loop {
            let progress = step as f64 / schedule;
            explorer.switch_epsilon = config.switch_epsilon.at(progress);
            explorer.noise_scale = 1.0 - (1.0 - config.noise.final_scale) * progress.min(1.0);

            let (a, sigma) = act(
                &obs,
                &learner.bundle,
                config.gains,
                ActMode::Train {
                    explorer: &mut explorer,
                    switching,
                },
            );
            let out = env.step(a, sigma);
            step += 1;
            ret += out.reward;
            if sigma == SwitchChoice::Policy {
                policy_steps += 1;
            }
            if log {
                trajectories.push(trajectory_row(episode, env.steps(), &env.state().pose, a, Some(sigma), out.reward, out.terminal));
            }
            replay.push(Transition {
                x: obs,
                a,
                r: out.reward,
                x_next: out.observation.clone(),
                sigma,
                terminal: out.terminal.is_absorbing(),
            });

            if replay.len() >= warmup {
                let batch = replay
                    .sample(config.batch_size, &mut replay_rng)
                    .map_err(|e| fail(e, &last_stable, episode))?;
                let (y_a, y_q) = critic_targets(&batch, &learner.bundle, config.gamma);
                learner
                    .update_critic_dqn(&batch, &y_a, &y_q)
                    .map_err(|e| fail(e, &last_stable, episode))?;
                let states: Vec<&Observation> = batch.iter().map(|t| &t.x).collect();
                learner.update_actor(&states).map_err(|e| fail(e, &last_stable, episode))?;
                learner.bundle.soft_update(config.tau).map_err(|e| fail(e, &last_stable, episode))?;
            }

            if step % config.eval_interval == 0 {
                let seeds = eval_seeds(config.seed, step / config.eval_interval, config.eval_episodes);
                let r = evaluate(&learner.bundle, &world, &seeds).map_err(|e| fail(e, &last_stable, episode))?;
                evals.push(EvalRecord {
                    step,
                    episode,
                    mean_metric: r.mean_metric,
                    reach_rate: r.reach_rate,
                    crash_rate: r.crash_rate,
                    timeout_rate: r.timeout_rate,
                });
                last_stable = Some(Box::new(learner.bundle.clone()));
            }
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                on_checkpoint(step, &learner.bundle).map_err(|e| fail(e, &last_stable, episode))?;
            }

            obs = out.observation;
            if out.terminal.is_end() {
                break out.terminal;
            }
        };

        let length = env.steps();
        episodes.push(EpisodeRecord {
            episode,
            step,
            episode_return: ret,
            eval_metric: evals.last().map(|e| e.mean_metric),
            usage_ratio: policy_steps as f64 / length as f64,
            outcome,
            length,
        });
    }

    let summary = summarize_run(config.algorithm, &episodes, &evals, step);
    Ok(RunArtifacts {
        config: config.clone(),
        world,
        episodes,
        evals,
        trajectories,
        bundle: learner.bundle,
        summary,
    })
}

/// The control arm: same loop, switch disabled and no dueling head.
pub fn ddpg_baseline(config: &TrainConfig, world: &WorldSpec) -> std::result::Result<RunArtifacts, TrainFailure> {
    let config = TrainConfig {
        algorithm: Algorithm::Ddpg,
        ..config.clone()
    };
    train(&config, world)
}

fn trajectory_row(
    episode: usize,
    step: usize,
    pose: &Pose,
    a: Action,
    sigma: Option<SwitchChoice>,
    reward: f64,
    terminal: Terminal,
) -> TrajectoryRow {
    TrajectoryRow {
        episode,
        step,
        x: pose.x,
        y: pose.y,
        theta: pose.theta,
        v: a.v,
        omega: a.omega,
        sigma,
        reward,
        terminal,
    }
}

pub fn summarize_run(algorithm: Algorithm, episodes: &[EpisodeRecord], evals: &[EvalRecord], total_steps: u64) -> RunSummary {
    let steps_to_sustained_80 = evals
        .windows(3)
        .find(|w| w.iter().all(|e| e.reach_rate >= 0.8))
        .map(|w| w[0].step);
    let tail = (episodes.len() / 10).max(1).min(episodes.len());
    let final_usage_ratio = if episodes.is_empty() {
        0.0
    } else {
        episodes[episodes.len() - tail..].iter().map(|e| e.usage_ratio).sum::<f64>() / tail as f64
    };
    RunSummary {
        algorithm,
        episodes: episodes.len(),
        total_steps,
        final_reach_rate: evals.last().map(|e| e.reach_rate),
        final_eval_metric: evals.last().map(|e| e.mean_metric),
        mean_eval_metric: (!evals.is_empty()).then(|| evals.iter().map(|e| e.mean_metric).sum::<f64>() / evals.len() as f64),
        steps_to_sustained_80,
        final_usage_ratio,
    }
}
