//! Real-time Soft Actor-Critic on a simulated visual reacher.

pub mod clock;
pub mod envsim;
pub mod harness;
pub mod nn;
pub mod pipeline;
pub mod sac;
pub mod types;
