//! Knowledge-transfer experiments: direct copy, fine tuning, reverse
//! transfer and lifelong learning, plus their evaluation metrics.

mod eval;
mod experiments;
pub mod output;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, TrainConfig};
use crate::nn::{NetError, DEFAULT_LEAKY_SLOPE};
use crate::sim::{ScenarioId, SimConfig};

pub use eval::{evaluate, EvaluationReport, Metric};
pub use experiments::{
    direct_copy, fine_tune, fine_tune_all, forgetting_events, fresh_curve, lifelong, reverse_transfer,
    task_trainer, train_curve, train_task, CurvePoint, DirectCopyRun, FineTuneResult, ForgettingEvent, LifelongPoint, LifelongResult,
    RetentionEntry, TransferMatrix,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything an experiment needs besides the tasks themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub leaky_slope: f64,
    pub tasks: Vec<ScenarioId>,
    /// Iterations per single-task training run (direct copy and pretraining).
    pub train_iterations: u64,
    pub finetune_iterations: u64,
    /// Episodes per matrix and retention evaluation.
    pub eval_episodes: usize,
    /// Episodes per learning-curve point.
    pub curve_eval_episodes: usize,
    /// Iterations between learning-curve points.
    pub eval_every: u64,
    pub master_seed: u64,
    pub seeds: usize,
    /// Keep the pretraining replay memory when fine tuning.
    pub keep_buffer: bool,
    /// Zero the optimizer accumulators at every task switch.
    pub reset_optimizer: bool,
    pub lifelong_order: Vec<ScenarioId>,
    pub lifelong_iterations: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            tasks: ScenarioId::ALL.to_vec(),
            train_iterations: 2000,
            finetune_iterations: 5000,
            eval_episodes: 500,
            curve_eval_episodes: 200,
            eval_every: 250,
            master_seed: 0,
            seeds: 3,
            keep_buffer: true,
            reset_optimizer: true,
            lifelong_order: vec![
                ScenarioId::Forward,
                ScenarioId::Right,
                ScenarioId::Left,
                ScenarioId::Left2,
                ScenarioId::Challenge,
            ],
            lifelong_iterations: 2000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.sim
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let bad = |k: &str| Err(HarnessError::InvalidConfig(format!("`{k}` out of range")));
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope");
        }
        if self.tasks.is_empty() {
            return bad("tasks");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes");
        }
        if self.curve_eval_episodes == 0 {
            return bad("curve_eval_episodes");
        }
        if self.eval_every == 0 {
            return bad("eval_every");
        }
        if self.seeds == 0 {
            return bad("seeds");
        }
        if self.lifelong_order.is_empty() {
            return bad("lifelong_order");
        }
        Ok(())
    }

    /// Per-replicate seeds derived from the master seed.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64)
            .map(|i| derive_seed(self.master_seed, &[Role::Replicate as u64, i]))
            .collect()
    }
}

/// Purpose tags mixed into derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Replicate = 1,
    Init = 2,
    Train = 3,
    Eval = 4,
    FineTune = 5,
    Fresh = 6,
    Lifelong = 7,
}

/// Deterministically mixes `tags` into `seed`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut s = seed;
    for &t in tags {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(t);
        s = rng.next_u64();
    }
    s
}

/// Traffic seed for evaluating on `task`. Shared by every network evaluated
/// on that task within a replicate.
pub fn eval_seed(replicate: u64, task: ScenarioId) -> u64 {
    derive_seed(replicate, &[Role::Eval as u64, task.index() as u64])
}

/// Mean and sample standard deviation (n − 1 denominator, 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
