//! From-scratch neural networks with manual backpropagation and RMSProp.

mod checkpoint;
pub mod layers;
mod mlp;
mod network;
mod rmsprop;
mod tensor;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use checkpoint::{load_params, read_checkpoint, save_params, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{leaky_relu, leaky_relu_grad, Conv2d, Dense};
pub use mlp::{MlpCache, MlpQNetwork};
pub use network::{
    QNetwork, QNetworkCache, CONV1_COLS, CONV1_FILTERS, CONV1_ROWS, CONV2_COLS, CONV2_FILTERS,
    CONV2_ROWS, DEFAULT_LEAKY_SLOPE, FLAT_LEN, HIDDEN_UNITS,
};
pub use rmsprop::{RmsPropConfig, RmsPropState};
pub use tensor::Tensor;

/// Outputs of every Q-network: one go action and four wait durations.
pub const NUM_ACTIONS: usize = 5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("invalid hyperparameter `{0}`")]
    InvalidHyperparameter(String),
    #[error("checkpoint has bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint truncated: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

static STAMP: AtomicU64 = AtomicU64::new(1);

/// Identifies one parameter configuration; forward caches carry it so a
/// backward pass can reject caches from other or outdated parameters.
pub(crate) fn next_stamp() -> u64 {
    STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Network inputs exposed as flat feature buffers.
pub trait Features {
    fn features(&self) -> &[f64];
}

impl Features for Vec<f64> {
    fn features(&self) -> &[f64] {
        self
    }
}

impl Features for crate::encoder::OccupancyGrid {
    fn features(&self) -> &[f64] {
        self.as_slice()
    }
}

pub trait ForwardCache {
    fn q_values(&self) -> [f64; NUM_ACTIONS];
}

/// A differentiable action-value function with a fixed list of parameter tensors.
pub trait QFunction: Clone + Send + Sync {
    type Input: Clone + Send + Sync + Features;
    type Cache: ForwardCache;

    fn forward(&self, input: &Self::Input) -> Result<Self::Cache, NetError>;

    /// Adds d(loss)/d(params) for upstream gradient `dq` into `grads`, which
    /// must be shaped like [`QFunction::params`].
    fn backward_into(
        &self,
        cache: &Self::Cache,
        dq: &[f64; NUM_ACTIONS],
        grads: &mut [Tensor],
    ) -> Result<(), NetError>;

    fn params(&self) -> Vec<&Tensor>;

    /// Mutable parameter access. Invalidates outstanding forward caches.
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn q_values(&self, input: &Self::Input) -> Result<[f64; NUM_ACTIONS], NetError> {
        Ok(self.forward(input)?.q_values())
    }

    /// Zero tensors shaped like the parameters.
    fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    /// Fresh gradient for a single upstream gradient.
    fn backward(
        &self,
        cache: &Self::Cache,
        dq: &[f64; NUM_ACTIONS],
    ) -> Result<Vec<Tensor>, NetError> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, dq, &mut grads)?;
        Ok(grads)
    }
}
