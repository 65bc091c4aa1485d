//! Soft Actor-Critic: replay, losses, the update step and acting.

pub mod gradcheck;
mod learner;
pub mod loss;
mod replay;

pub use learner::{act, ActMode, Agent, Learner, NullLearner, RandomActor, SacActor, SacLearner, UpdateMetrics};
pub use replay::ReplayBuffer;

use crate::nn::NnError;
use crate::types::{DomainError, JOINTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SacError {
    #[error("replay buffer holds {size} transitions, sampling needs {required}")]
    BufferWarming { size: usize, required: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {loss} loss at batch index {batch_index}")]
    NonFiniteLoss { loss: &'static str, batch_index: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacHyper {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub target_entropy: f64,
    /// Starting entropy temperature; learned in log space afterwards.
    pub init_temperature: f64,
}

impl Default for SacHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 128,
            target_entropy: -(JOINTS as f64),
            init_temperature: 0.1,
        }
    }
}

impl SacHyper {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: &str| Err(SacError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.init_temperature > 0.0 && self.init_temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        for lr in [self.lr_actor, self.lr_critic, self.lr_alpha] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rates must be positive");
            }
        }
        if !self.target_entropy.is_finite() {
            return bad("target entropy must be finite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
