//! DQN training with dynamic frame skipping and Monte Carlo return targets.

mod action;
mod env;
mod replay;
mod returns;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NetError, RmsPropConfig};
use crate::sim::SimError;

pub use action::{select_action, ActionId};
pub use env::{ActionResult, Environment, EpisodeFactory, IntersectionEnv, IntersectionTask};
pub use replay::{Experience, ReplayBuffer, ReplayMemory, SplitReplayBuffer};
pub use returns::{compute_returns, Decision, Trajectory, MAX_TARGET, MIN_TARGET};
pub use trainer::{play_greedy, rollout, train_step, EpisodeSummary, IterationStats, Trainer};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("episode already terminated")]
    EpisodeOver,
    #[error("trajectory is not terminal")]
    IncompleteTrajectory,
    #[error("return target {0} outside the reachable range")]
    TargetOutOfRange(f64),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid config `{0}`")]
    InvalidConfig(&'static str),
}

/// Which replay memory the trainer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayKind {
    #[default]
    Fifo,
    /// Reservoir-selected long-term part plus a short FIFO part.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epsilon: f64,
    /// Per-simulator-step discount.
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub replay: ReplayKind,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            gamma: 0.95,
            batch_size: 60,
            buffer_capacity: 1000,
            replay: ReplayKind::Fifo,
            optimizer: RmsPropConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AgentError::InvalidConfig("epsilon"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(AgentError::InvalidConfig("gamma"));
        }
        if self.batch_size == 0 {
            return Err(AgentError::InvalidConfig("batch_size"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(AgentError::InvalidConfig("buffer_capacity"));
        }
        if self.replay == ReplayKind::Split && (!self.batch_size.is_multiple_of(2) || self.buffer_capacity < 10) {
            return Err(AgentError::InvalidConfig("replay"));
        }
        self.optimizer
            .validate()
            .map_err(|_| AgentError::InvalidConfig("optimizer"))
    }
}
