//! Assisted deep deterministic policy gradient for local robot navigation.
//!
//! A learned actor and a proportional controller share the driving; a dueling
//! double-Q branch on the critic decides, step by step, which of the two acts.
//! Both kinds of experience land in one replay buffer, so the actor learns
//! off-policy from the controller's demonstrations until it can drive alone.
//!
//! Modules, bottom up:
//!
//! * [`tensor`]: dense layers with exact reverse-mode gradients and Adam.
//! * [`networks`]: actor, critic-DQN, target copies, checkpoints.
//! * [`world`]: the 2D lidar simulator and reward functions.
//! * [`controller`]: the proportional assist controller.
//! * [`replay`]: the experience buffer.
//! * [`trainer`]: the training loop and the plain DDPG baseline.
//! * [`experiment`]: manifests, presets, artifact files and analysis.

pub mod controller;
pub mod error;
pub mod experiment;
pub mod networks;
pub mod replay;
pub mod tensor;
pub mod trainer;
pub mod world;

pub use controller::{p_control, PGains};
pub use error::{Error, Result};
pub use experiment::{ExperimentManifest, RunIndex};
pub use networks::{
    Action, Actor, CriticDqn, CriticOutput, DqnOutput, NetConfig, NetworkBundle, Observation, SwitchChoice,
    TrunkPreset,
};
pub use replay::{ReplayBuffer, Transition};
pub use tensor::{Activation, LayerParams, OptimizerState, Tensor};
pub use trainer::{train, train_with, Algorithm, RunArtifacts, TrainConfig};
pub use world::{NavEnv, RewardKind, RewardSpec, Terminal, WorldSpec};

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn fingerprint(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}
