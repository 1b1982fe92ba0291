use serde::{Deserialize, Serialize};

use crate::nn::{NetError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    /// Decay ρ of the squared-gradient moving average.
    pub decay: f64,
    /// Added to the root-mean-square before dividing.
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidHyperparameter("learning_rate".into()));
        }
        if !(self.decay >= 0.0 && self.decay < 1.0) {
            return Err(NetError::InvalidHyperparameter("rmsprop_decay".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(NetError::InvalidHyperparameter("rmsprop_epsilon".into()));
        }
        Ok(())
    }
}

/// Per-parameter squared-gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    accumulators: Vec<Tensor>,
}

impl RmsPropState {
    pub fn new(config: RmsPropConfig, params: &[&Tensor]) -> Self {
        Self {
            config,
            accumulators: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    /// Zeroes the accumulators (used when switching tasks).
    pub fn reset(&mut self) {
        self.accumulators.iter_mut().for_each(|a| a.fill(0.0));
    }

    /// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g / (√acc + ε)`, elementwise.
    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<(), NetError> {
        if params.len() != self.accumulators.len() || grads.len() != params.len() {
            return Err(NetError::ShapeMismatch {
                expected: format!("{} tensors", self.accumulators.len()),
                found: format!("{} params / {} grads", params.len(), grads.len()),
            });
        }
        for ((p, g), acc) in params.iter().zip(grads).zip(&self.accumulators) {
            if p.shape() != g.shape() || p.shape() != acc.shape() {
                return Err(NetError::ShapeMismatch {
                    expected: format!("{:?}", acc.shape()),
                    found: format!("param {:?}, grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        let RmsPropConfig {
            learning_rate: lr,
            decay: rho,
            epsilon: eps,
        } = self.config;
        for ((p, g), acc) in params.into_iter().zip(grads).zip(&mut self.accumulators) {
            for ((w, &gv), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
                *a = rho * *a + (1.0 - rho) * gv * gv;
                *w -= lr * gv / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}
