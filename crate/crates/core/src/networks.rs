//! Actor, critic and switch networks.
//!
//! ```text
//!   scan stack ──conv──conv──┐
//!   speed, target_local ─────┴─ features ─┬─ actor trunk ─ (sigmoid, tanh) ─ action
//!                                         │
//!   (critic-DQN has its own extractor)    ├─ critic: fc ─ [h, action] ─ fc… ─ Q^A
//!                                         └─ dqn:    fc… ─ V, adv[2] ─ Q[σ]
//! ```
//!
//! The critic branch and the DQN branch share one convolutional extractor and
//! split into separate fully-connected trunks. The actor owns its extractor so
//! that actor updates never touch critic parameters.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    conv1d_output_len, conv_backward_raw, conv_forward_raw, linear_row, linear_row_backward,
    linear_row_input_grad, sigmoid, ConvShape, LayerParams,
};

/// Uniform bound for the output layers of the actor and the value heads.
pub const OUTPUT_INIT_BOUND: f64 = 3e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Fully connected trunk sizes used in the hyper-parameter study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrunkPreset {
    #[serde(rename = "2x100")]
    TwoBy100,
    #[serde(rename = "3x100")]
    ThreeBy100,
    #[serde(rename = "3x256")]
    ThreeBy256,
}

impl TrunkPreset {
    pub const ALL: [TrunkPreset; 3] = [TrunkPreset::TwoBy100, TrunkPreset::ThreeBy100, TrunkPreset::ThreeBy256];

    pub fn hidden(self) -> Vec<usize> {
        match self {
            TrunkPreset::TwoBy100 => vec![100, 100],
            TrunkPreset::ThreeBy100 => vec![100, 100, 100],
            TrunkPreset::ThreeBy256 => vec![256, 256, 256],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TrunkPreset::TwoBy100 => "2x100",
            TrunkPreset::ThreeBy100 => "3x100",
            TrunkPreset::ThreeBy256 => "3x256",
        }
    }
}

impl std::str::FromStr for TrunkPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrunkPreset::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown trunk preset `{s}` (expected 2x100, 3x100 or 3x256)")))
    }
}

/// Shape and scaling of every network in a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub beams: usize,
    pub stack: usize,
    pub conv: Vec<ConvSpec>,
    /// Hidden layer widths; at least two, since the action enters the critic
    /// at the second layer.
    pub hidden: Vec<usize>,
    pub v_max: f64,
    pub omega_max: f64,
    /// Scan ranges are divided by this before entering the networks.
    pub max_range: f64,
    /// Target coordinates are divided by this (the room diagonal).
    pub distance_scale: f64,
    /// Whether the critic-DQN carries the dueling switch branch.
    pub dueling_switch: bool,
}

impl NetConfig {
    pub fn default_conv() -> Vec<ConvSpec> {
        vec![
            ConvSpec {
                out_channels: 32,
                kernel: 5,
                stride: 2,
            },
            ConvSpec {
                out_channels: 32,
                kernel: 3,
                stride: 2,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() < 2 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "need at least two non-empty hidden layers, got {:?}",
                self.hidden
            )));
        }
        if self.beams == 0 || self.stack == 0 {
            return Err(Error::Config("beams and stack depth must be positive".into()));
        }
        for (name, v) in [
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("max_range", self.max_range),
            ("distance_scale", self.distance_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.conv_shapes().map(|_| ())
    }

    fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        let mut shapes = Vec::with_capacity(self.conv.len());
        let (mut ch, mut len) = (self.stack, self.beams);
        for c in &self.conv {
            let out_len = conv1d_output_len(len, c.kernel, c.stride).ok_or_else(|| {
                Error::Config(format!("conv kernel {} / stride {} does not fit length {len}", c.kernel, c.stride))
            })?;
            shapes.push(ConvShape {
                in_ch: ch,
                out_ch: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                in_len: len,
                out_len,
            });
            ch = c.out_channels;
            len = out_len;
        }
        Ok(shapes)
    }

    /// Flattened conv output size plus the four speed/target entries.
    pub fn feature_len(&self) -> usize {
        let flat = match self.conv_shapes().ok().and_then(|s| s.last().copied()) {
            Some(last) => last.out_ch * last.out_len,
            None => self.stack * self.beams,
        };
        flat + 4
    }
}

// ---------------------------------------------------------------------------
// Domain types

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Oldest scan first. Scans are shared between consecutive observations.
    pub scan_stack: Vec<Arc<[f64]>>,
    /// `(v, ω)`.
    pub speed: [f64; 2],
    /// Goal in the body frame, x forward and y left.
    pub target_local: [f64; 2],
}

impl Observation {
    pub fn check(&self, config: &NetConfig) -> Result<()> {
        if self.scan_stack.len() != config.stack {
            return Err(Error::dim("features", config.stack, self.scan_stack.len()));
        }
        for scan in &self.scan_stack {
            if scan.len() != config.beams {
                return Err(Error::dim("features", config.beams, scan.len()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(self, v_max: f64, omega_max: f64) -> Self {
        Self {
            v: self.v.clamp(0.0, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SwitchChoice {
    Policy,
    Controller,
}

impl SwitchChoice {
    pub fn index(self) -> usize {
        match self {
            SwitchChoice::Policy => 0,
            SwitchChoice::Controller => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SwitchChoice::Policy => "POLICY",
            SwitchChoice::Controller => "CONTROLLER",
        }
    }
}

/// Greedy choice over `[Q_policy, Q_controller]`; ties go to the policy.
pub fn greedy_switch(q_switch: [f64; 2]) -> SwitchChoice {
    if q_switch[1] > q_switch[0] {
        SwitchChoice::Controller
    } else {
        SwitchChoice::Policy
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticOutput {
    pub q_a: f64,
    pub advantage: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqnOutput {
    pub value: f64,
    pub q_switch: [f64; 2],
}

// ---------------------------------------------------------------------------
// Building blocks

fn fan_in_layer<R: Rng + ?Sized>(name: String, n_in: usize, n_out: usize, rng: &mut R) -> LayerParams {
    LayerParams::uniform(name, &[n_in, n_out], &[n_out], 1.0 / (n_in as f64).sqrt(), rng)
}

fn output_layer<R: Rng + ?Sized>(name: String, n_in: usize, n_out: usize, rng: &mut R) -> LayerParams {
    LayerParams::uniform(name, &[n_in, n_out], &[n_out], OUTPUT_INIT_BOUND, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    convs: Vec<LayerParams>,
    shapes: Vec<ConvShape>,
    max_range: f64,
    v_max: f64,
    omega_max: f64,
    distance_scale: f64,
}

/// Intermediate values of one extractor pass.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    /// `inputs[i]` feeds conv `i`; `pre[i]` is its pre-activation.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub features: Vec<f64>,
}

impl FeatureExtractor {
    fn new<R: Rng + ?Sized>(prefix: &str, config: &NetConfig, rng: &mut R) -> Result<Self> {
        let shapes = config.conv_shapes()?;
        let convs = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let bound = 1.0 / ((s.in_ch * s.kernel) as f64).sqrt();
                LayerParams::uniform(
                    format!("{prefix}.conv{i}"),
                    &[s.out_ch, s.in_ch, s.kernel],
                    &[s.out_ch],
                    bound,
                    rng,
                )
            })
            .collect();
        Ok(Self {
            convs,
            shapes,
            max_range: config.max_range,
            v_max: config.v_max,
            omega_max: config.omega_max,
            distance_scale: config.distance_scale,
        })
    }

    pub fn forward(&self, obs: &Observation) -> FeatureCache {
        let mut x: Vec<f64> = Vec::with_capacity(obs.scan_stack.len() * obs.scan_stack[0].len());
        for scan in &obs.scan_stack {
            x.extend(scan.iter().map(|r| r / self.max_range));
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre = Vec::with_capacity(self.convs.len());
        for (p, s) in self.convs.iter().zip(&self.shapes) {
            let mut z = vec![0.0; s.out_ch * s.out_len];
            conv_forward_raw(*s, &x, p.weights.data(), p.biases.data(), &mut z);
            let next = z.iter().map(|v| v.max(0.0)).collect();
            inputs.push(std::mem::replace(&mut x, next));
            pre.push(z);
        }
        x.push(obs.speed[0] / self.v_max);
        x.push(obs.speed[1] / self.omega_max);
        x.push(obs.target_local[0] / self.distance_scale);
        x.push(obs.target_local[1] / self.distance_scale);
        FeatureCache {
            inputs,
            pre,
            features: x,
        }
    }

    /// Accumulates conv gradients from `d_features`.
    fn backward(&mut self, cache: &FeatureCache, d_features: &[f64]) {
        let n_conv = self.convs.len();
        if n_conv == 0 {
            return;
        }
        let flat = d_features.len() - 4;
        let mut g = d_features[..flat].to_vec();
        for i in (0..n_conv).rev() {
            for (gv, z) in g.iter_mut().zip(&cache.pre[i]) {
                if *z <= 0.0 {
                    *gv = 0.0;
                }
            }
            if i == 0 {
                conv_backward_raw(self.shapes[i], &cache.inputs[i], &mut self.convs[i], &g, None);
            } else {
                let mut dx = vec![0.0; cache.inputs[i].len()];
                conv_backward_raw(self.shapes[i], &cache.inputs[i], &mut self.convs[i], &g, Some(&mut dx));
                g = dx;
            }
        }
    }
}

/// Stack of ReLU fully-connected layers.
#[derive(Clone, Debug, PartialEq)]
struct Trunk {
    layers: Vec<LayerParams>,
}

#[derive(Clone, Debug)]
struct TrunkCache {
    /// `acts[0]` is the trunk input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl TrunkCache {
    fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Trunk {
    fn new<R: Rng + ?Sized>(prefix: &str, first: usize, n_in: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut n = n_in;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(fan_in_layer(format!("{prefix}.fc{}", first + i), n, w, rng));
            n = w;
        }
        Self { layers }
    }

    fn forward(&self, x: Vec<f64>) -> TrunkCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x);
        for p in &self.layers {
            let mut z = vec![0.0; p.biases.len()];
            linear_row(acts.last().unwrap(), p.weights.data(), p.biases.data(), &mut z);
            acts.push(z.iter().map(|v| v.max(0.0)).collect());
            pre.push(z);
        }
        TrunkCache { acts, pre }
    }

    fn relu_mask(g: &mut [f64], z: &[f64]) {
        for (gv, zv) in g.iter_mut().zip(z) {
            if *zv <= 0.0 {
                *gv = 0.0;
            }
        }
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
    fn backward(&mut self, cache: &TrunkCache, g_out: &[f64]) -> Vec<f64> {
        let mut g = g_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            Self::relu_mask(&mut g, &cache.pre[i]);
            let mut dx = vec![0.0; cache.acts[i].len()];
            linear_row_backward(&cache.acts[i], &mut self.layers[i], &g, Some(&mut dx));
            g = dx;
        }
        g
    }

    /// Input gradient only; parameter gradients are untouched.
    fn input_grad(&self, cache: &TrunkCache, g_out: &[f64]) -> Vec<f64> {
        let mut g = g_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            Self::relu_mask(&mut g, &cache.pre[i]);
            let mut dx = vec![0.0; cache.acts[i].len()];
            linear_row_input_grad(self.layers[i].weights.data(), &g, &mut dx);
            g = dx;
        }
        g
    }
}

fn head_forward(p: &LayerParams, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.biases.len()];
    linear_row(x, p.weights.data(), p.biases.data(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Actor

#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    extractor: FeatureExtractor,
    trunk: Trunk,
    head: LayerParams,
    v_max: f64,
    omega_max: f64,
}

#[derive(Clone, Debug)]
pub struct ActorCache {
    features: FeatureCache,
    trunk: TrunkCache,
    /// Head pre-activations `(h_v, h_ω)`.
    pub head: [f64; 2],
    pub action: Action,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(config: &NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let extractor = FeatureExtractor::new("actor", config, rng)?;
        let trunk = Trunk::new("actor", 0, config.feature_len(), &config.hidden, rng);
        let head = output_layer("actor.head".into(), *config.hidden.last().unwrap(), 2, rng);
        Ok(Self {
            extractor,
            trunk,
            head,
            v_max: config.v_max,
            omega_max: config.omega_max,
        })
    }

    /// Maps head pre-activations onto the action box.
    pub fn squash(&self, head: [f64; 2]) -> Action {
        Action {
            v: self.v_max * sigmoid(head[0]),
            omega: self.omega_max * head[1].tanh(),
        }
    }

    pub fn forward_cached(&self, obs: &Observation) -> ActorCache {
        let features = self.extractor.forward(obs);
        let trunk = self.trunk.forward(features.features.clone());
        let h = head_forward(&self.head, trunk.output());
        let head = [h[0], h[1]];
        ActorCache {
            features,
            trunk,
            head,
            action: self.squash(head),
        }
    }

    pub fn forward(&self, obs: &Observation) -> Action {
        self.forward_cached(obs).action
    }

    /// Accumulates parameter gradients given `dL/d(v, ω)`.
    pub fn backward(&mut self, cache: &ActorCache, d_action: [f64; 2]) {
        let s = sigmoid(cache.head[0]);
        let t = cache.head[1].tanh();
        let g_head = [
            d_action[0] * self.v_max * s * (1.0 - s),
            d_action[1] * self.omega_max * (1.0 - t * t),
        ];
        let mut g_trunk = vec![0.0; cache.trunk.output().len()];
        linear_row_backward(cache.trunk.output(), &mut self.head, &g_head, Some(&mut g_trunk));
        let g_feat = self.trunk.backward(&cache.trunk, &g_trunk);
        self.extractor.backward(&cache.features, &g_feat);
    }

    pub fn params(&self) -> Vec<&LayerParams> {
        let mut v: Vec<&LayerParams> = self.extractor.convs.iter().collect();
        v.extend(self.trunk.layers.iter());
        v.push(&self.head);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut v: Vec<&mut LayerParams> = self.extractor.convs.iter_mut().collect();
        v.extend(self.trunk.layers.iter_mut());
        v.push(&mut self.head);
        v
    }

    pub fn head_mut(&mut self) -> &mut LayerParams {
        &mut self.head
    }
}

// ---------------------------------------------------------------------------
// Critic-DQN

#[derive(Clone, Debug, PartialEq)]
struct DuelingBranch {
    trunk: Trunk,
    value: LayerParams,
    advantage: LayerParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticDqn {
    extractor: FeatureExtractor,
    /// First critic layer, features only.
    critic_in: Trunk,
    /// Remaining critic layers; their input is `[h1, action]`.
    critic_rest: Trunk,
    critic_head: LayerParams,
    dqn: Option<DuelingBranch>,
    v_max: f64,
    omega_max: f64,
}

#[derive(Clone, Debug)]
struct CriticBranchCache {
    first: TrunkCache,
    rest: TrunkCache,
}

#[derive(Clone, Debug)]
struct DqnBranchCache {
    trunk: TrunkCache,
}

/// Forward results with enough state to backpropagate.
#[derive(Clone, Debug)]
pub struct CriticDqnCache {
    features: FeatureCache,
    critic: Option<CriticBranchCache>,
    dqn: Option<DqnBranchCache>,
    pub q_a: f64,
    pub value: f64,
    pub q_switch: [f64; 2],
}

impl CriticDqnCache {
    pub fn critic_output(&self) -> CriticOutput {
        CriticOutput {
            q_a: self.q_a,
            advantage: self.q_a - self.value,
        }
    }

    pub fn dqn_output(&self) -> DqnOutput {
        DqnOutput {
            value: self.value,
            q_switch: self.q_switch,
        }
    }
}

impl CriticDqn {
    pub fn new<R: Rng + ?Sized>(config: &NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let extractor = FeatureExtractor::new("critic", config, rng)?;
        let f = config.feature_len();
        let h = &config.hidden;
        let critic_in = Trunk::new("critic", 0, f, &h[..1], rng);
        let critic_rest = Trunk::new("critic", 1, h[0] + 2, &h[1..], rng);
        let critic_head = output_layer("critic.head".into(), *h.last().unwrap(), 1, rng);
        let dqn = config.dueling_switch.then(|| {
            let trunk = Trunk::new("dqn", 0, f, h, rng);
            let last = *h.last().unwrap();
            DuelingBranch {
                trunk,
                value: output_layer("dqn.value".into(), last, 1, rng),
                advantage: output_layer("dqn.advantage".into(), last, 2, rng),
            }
        });
        Ok(Self {
            extractor,
            critic_in,
            critic_rest,
            critic_head,
            dqn,
            v_max: config.v_max,
            omega_max: config.omega_max,
        })
    }

    pub fn has_switch(&self) -> bool {
        self.dqn.is_some()
    }

    /// Action as seen by the critic: both components mapped onto [-1, 1].
    fn action_input(&self, a: Action) -> [f64; 2] {
        [2.0 * a.v / self.v_max - 1.0, a.omega / self.omega_max]
    }

    fn critic_branch(&self, features: &[f64], action: Action) -> (CriticBranchCache, f64) {
        let first = self.critic_in.forward(features.to_vec());
        let mut x = first.output().to_vec();
        x.extend(self.action_input(action));
        let rest = self.critic_rest.forward(x);
        let q = head_forward(&self.critic_head, rest.output())[0];
        (CriticBranchCache { first, rest }, q)
    }

    fn dqn_branch(&self, features: &[f64]) -> Option<(DqnBranchCache, f64, [f64; 2])> {
        let d = self.dqn.as_ref()?;
        let trunk = d.trunk.forward(features.to_vec());
        let value = head_forward(&d.value, trunk.output())[0];
        let a = head_forward(&d.advantage, trunk.output());
        let adv = [a[0], a[1]];
        let mean = 0.5 * (adv[0] + adv[1]);
        let q = [value + adv[0] - mean, value + adv[1] - mean];
        Some((DqnBranchCache { trunk }, value, q))
    }

    /// Runs the requested branches. Without the switch branch, `value` is 0 and
    /// `q_switch` is `[0, 0]`.
    pub fn forward_cached(&self, obs: &Observation, action: Option<Action>, with_dqn: bool) -> CriticDqnCache {
        let features = self.extractor.forward(obs);
        let (critic, q_a) = match action {
            Some(a) => {
                let (c, q) = self.critic_branch(&features.features, a);
                (Some(c), q)
            }
            None => (None, 0.0),
        };
        let (dqn, value, q_switch) = match with_dqn.then(|| self.dqn_branch(&features.features)).flatten() {
            Some((c, v, q)) => (Some(c), v, q),
            None => (None, 0.0, [0.0, 0.0]),
        };
        CriticDqnCache {
            features,
            critic,
            dqn,
            q_a,
            value,
            q_switch,
        }
    }

    /// `Q^A(x, a)` and the advantage `Q^A(x, a) − V(x)`.
    pub fn critic_forward(&self, obs: &Observation, action: Action) -> CriticOutput {
        self.forward_cached(obs, Some(action), true).critic_output()
    }

    pub fn dqn_forward(&self, obs: &Observation) -> DqnOutput {
        self.forward_cached(obs, None, true).dqn_output()
    }

    /// Accumulates parameter gradients for `dL/dQ^A` and `dL/dQ[σ]`.
    pub fn backward(&mut self, cache: &CriticDqnCache, d_q_a: f64, d_q_switch: [f64; 2]) {
        let mut g_feat = vec![0.0; cache.features.features.len()];
        if let Some(c) = &cache.critic {
            let mut g_rest = vec![0.0; c.rest.output().len()];
            linear_row_backward(c.rest.output(), &mut self.critic_head, &[d_q_a], Some(&mut g_rest));
            let g_in = self.critic_rest.backward(&c.rest, &g_rest);
            let h1 = c.first.output().len();
            let g_first = self.critic_in.backward(&c.first, &g_in[..h1]);
            for (a, b) in g_feat.iter_mut().zip(&g_first) {
                *a += b;
            }
        }
        if let (Some(c), Some(d)) = (&cache.dqn, self.dqn.as_mut()) {
            let g_value: f64 = d_q_switch.iter().sum();
            let mean = 0.5 * g_value;
            let g_adv = [d_q_switch[0] - mean, d_q_switch[1] - mean];
            let out = c.trunk.output();
            let mut g_trunk = vec![0.0; out.len()];
            let mut tmp = vec![0.0; out.len()];
            linear_row_backward(out, &mut d.value, &[g_value], Some(&mut g_trunk));
            linear_row_backward(out, &mut d.advantage, &g_adv, Some(&mut tmp));
            for (a, b) in g_trunk.iter_mut().zip(&tmp) {
                *a += b;
            }
            let g_first = d.trunk.backward(&c.trunk, &g_trunk);
            for (a, b) in g_feat.iter_mut().zip(&g_first) {
                *a += b;
            }
        }
        self.extractor.backward(&cache.features, &g_feat);
    }

    /// Advantage at `(obs, action)` and its gradient w.r.t. `(v, ω)`. No
    /// parameter gradients are touched.
    pub fn advantage_action_grad(&self, obs: &Observation, action: Action) -> (f64, [f64; 2]) {
        let cache = self.forward_cached(obs, Some(action), true);
        let c = cache.critic.as_ref().unwrap();
        let mut g_rest = vec![0.0; c.rest.output().len()];
        linear_row_input_grad(self.critic_head.weights.data(), &[1.0], &mut g_rest);
        let g_in = self.critic_rest.input_grad(&c.rest, &g_rest);
        let h1 = c.first.output().len();
        // V(x) has no action input, so dA/da = dQ^A/da.
        let grad = [g_in[h1] * 2.0 / self.v_max, g_in[h1 + 1] / self.omega_max];
        (cache.q_a - cache.value, grad)
    }

    pub fn params(&self) -> Vec<&LayerParams> {
        let mut v: Vec<&LayerParams> = self.extractor.convs.iter().collect();
        v.extend(self.critic_in.layers.iter());
        v.extend(self.critic_rest.layers.iter());
        v.push(&self.critic_head);
        if let Some(d) = &self.dqn {
            v.extend(d.trunk.layers.iter());
            v.push(&d.value);
            v.push(&d.advantage);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut v: Vec<&mut LayerParams> = self.extractor.convs.iter_mut().collect();
        v.extend(self.critic_in.layers.iter_mut());
        v.extend(self.critic_rest.layers.iter_mut());
        v.push(&mut self.critic_head);
        if let Some(d) = &mut self.dqn {
            v.extend(d.trunk.layers.iter_mut());
            v.push(&mut d.value);
            v.push(&mut d.advantage);
        }
        v
    }

    /// Weights of the action rows of the second critic layer.
    pub fn action_weights_mut(&mut self) -> Vec<&mut f64> {
        let layer = &mut self.critic_rest.layers[0];
        let n_out = layer.biases.len();
        let n_in = layer.weights.shape()[0];
        layer.weights.data_mut()[(n_in - 2) * n_out..].iter_mut().collect()
    }
}

// ---------------------------------------------------------------------------
// Bundle

/// Online networks plus their slowly tracking target copies.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBundle {
    pub config: NetConfig,
    pub actor: Actor,
    pub critic: CriticDqn,
    pub target_actor: Actor,
    pub target_critic: CriticDqn,
}

impl NetworkBundle {
    /// Fresh online networks; targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        let actor = Actor::new(&config, rng)?;
        let critic = CriticDqn::new(&config, rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            config,
            actor,
            critic,
        })
    }

    pub fn hard_update(&mut self) {
        self.soft_update(1.0).expect("tau = 1 is valid");
    }

    /// `target ← τ·online + (1 − τ)·target` for every parameter.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("soft update rate must lie in [0, 1], got {tau}")));
        }
        for (t, o) in self.target_actor.params_mut().into_iter().zip(self.actor.params()) {
            if tau == 1.0 {
                t.copy_values_from(o);
            } else {
                t.blend_from(o, tau);
            }
        }
        for (t, o) in self.target_critic.params_mut().into_iter().zip(self.critic.params()) {
            if tau == 1.0 {
                t.copy_values_from(o);
            } else {
                t.blend_from(o, tau);
            }
        }
        Ok(())
    }

    /// Every parameter tensor, tagged by role, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &crate::tensor::Tensor)> {
        let mut out = Vec::new();
        let groups: [(&str, Vec<&LayerParams>); 4] = [
            ("online", self.actor.params()),
            ("online", self.critic.params()),
            ("target", self.target_actor.params()),
            ("target", self.target_critic.params()),
        ];
        for (role, params) in groups {
            for p in params {
                out.push((format!("{role}.{}.weights", p.name()), &p.weights));
                out.push((format!("{role}.{}.biases", p.name()), &p.biases));
            }
        }
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut crate::tensor::Tensor)> {
        let mut out = Vec::new();
        let groups: [(&str, Vec<&mut LayerParams>); 4] = [
            ("online", self.actor.params_mut()),
            ("online", self.critic.params_mut()),
            ("target", self.target_actor.params_mut()),
            ("target", self.target_critic.params_mut()),
        ];
        for (role, params) in groups {
            for p in params {
                let name = p.name().to_string();
                out.push((format!("{role}.{name}.weights"), &mut p.weights));
                out.push((format!("{role}.{name}.biases"), &mut p.biases));
            }
        }
        out
    }

    pub fn max_target_lag(&self) -> f64 {
        let pairs = self
            .actor
            .params()
            .into_iter()
            .zip(self.target_actor.params())
            .chain(self.critic.params().into_iter().zip(self.target_critic.params()));
        pairs
            .map(|(o, t)| o.weights.max_abs_diff(&t.weights).max(o.biases.max_abs_diff(&t.biases)))
            .fold(0.0, f64::max)
    }
}

/// ε-greedy switch choice; with probability `epsilon` a uniformly random
/// branch is taken.
pub fn select_switch<R: Rng + ?Sized>(q_switch: [f64; 2], epsilon: f64, rng: &mut R) -> SwitchChoice {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        if rng.random::<bool>() {
            SwitchChoice::Policy
        } else {
            SwitchChoice::Controller
        }
    } else {
        greedy_switch(q_switch)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Text container, one item per line:
//
//   asddpg-checkpoint 1
//   fingerprint <16 hex digits of sha256(config json)>
//   config <config json>
//   tensors <count>
//   tensor <name> <dim> <dim> ...
//   <values, space separated, shortest round-trip scientific notation>
//   ...

pub const CHECKPOINT_MAGIC: &str = "asddpg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn config_fingerprint(config: &NetConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    crate::fingerprint(json.as_bytes())
}

impl NetworkBundle {
    pub fn to_checkpoint_string(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let tensors = self.named_tensors();
        writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(s, "fingerprint {}", config_fingerprint(&self.config)).unwrap();
        writeln!(s, "config {}", serde_json::to_string(&self.config).unwrap()).unwrap();
        writeln!(s, "tensors {}", tensors.len()).unwrap();
        for (name, t) in tensors {
            write!(s, "tensor {name}").unwrap();
            for d in t.shape() {
                write!(s, " {d}").unwrap();
            }
            s.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    s.push(' ');
                }
                first = false;
                write!(s, "{v:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Format(format!("checkpoint line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Format(format!("checkpoint truncated before {what}")));

        let (n, header) = next("header")?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad(n, "not a checkpoint file"))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(bad(n, &format!("unsupported version {version}")));
        }
        let (n, fp_line) = next("fingerprint")?;
        let fingerprint = fp_line.strip_prefix("fingerprint ").ok_or_else(|| bad(n, "expected fingerprint"))?;
        let (n, cfg_line) = next("config")?;
        let config: NetConfig = serde_json::from_str(cfg_line.strip_prefix("config ").ok_or_else(|| bad(n, "expected config"))?)
            .map_err(|e| bad(n, &e.to_string()))?;
        if config_fingerprint(&config) != fingerprint {
            return Err(bad(n, "config does not match fingerprint"));
        }
        let (n, count_line) = next("tensor count")?;
        let count: usize = count_line
            .strip_prefix("tensors ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(n, "expected tensor count"))?;

        // Shapes come from the config; values from the file.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut bundle = NetworkBundle::new(config, &mut rng)?;
        let mut slots = bundle.named_tensors_mut();
        if slots.len() != count {
            return Err(Error::Format(format!(
                "checkpoint holds {count} tensors, config implies {}",
                slots.len()
            )));
        }
        for (name, slot) in slots.iter_mut() {
            let (n, head) = next("tensor header")?;
            let mut parts = head.split_whitespace();
            if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
                return Err(bad(n, &format!("expected tensor `{name}`")));
            }
            let dims: Vec<usize> = parts.map(|d| d.parse().map_err(|_| bad(n, "bad dimension"))).collect::<Result<_>>()?;
            if dims != slot.shape() {
                return Err(bad(n, &format!("shape {dims:?} does not match {:?}", slot.shape())));
            }
            let (n, values) = next("tensor values")?;
            let data = slot.data_mut();
            let mut k = 0;
            for tok in values.split_whitespace() {
                if k >= data.len() {
                    return Err(bad(n, "too many values"));
                }
                data[k] = tok.parse().map_err(|_| bad(n, &format!("bad value `{tok}`")))?;
                k += 1;
            }
            if k != data.len() {
                return Err(bad(n, &format!("expected {} values, found {k}", data.len())));
            }
        }
        drop(slots);
        Ok(bundle)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
