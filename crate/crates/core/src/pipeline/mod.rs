//! Synchronous and asynchronous interaction/learning loops.
//!
//! The synchronous loop runs observe, act, env step, store, sample and
//! update back to back in one worker and then sleeps to the cycle boundary.
//! The asynchronous loop splits the same work over three workers joined by a
//! [`TransitionChannel`], a [`BatchChannel`] and a [`WeightStore`], so the
//! interaction cycle does not wait on learning.

mod channel;
mod log;
mod runner;
mod store;

pub use channel::{BatchChannel, TransitionChannel, KEY_BATCH_READY, KEY_BATCH_SPACE, KEY_TRANSITIONS};
pub use log::{episode_returns, read_rows, RunLog, StepRow, TimingRecord, UpdateRow};
pub use runner::{run, run_async, run_sync, RunOutput};
pub use store::{StoreReader, WeightStore};

use serde::{Deserialize, Serialize};

use crate::clock::{ClockError, WorkerId};
use crate::envsim::EnvError;
use crate::nn::NnError;
use crate::sac::SacError;
use crate::types::Millis;

pub const INTERACTION: WorkerId = 0;
pub const SAMPLER: WorkerId = 1;
pub const UPDATER: WorkerId = 2;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("publish expected version {expected}, got {got}")]
    VersionGap { expected: u64, got: u64 },
    #[error("reader saw version {seen}, then {got}")]
    VersionRegression { seen: u64, got: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} worker panicked")]
    WorkerPanic(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

/// Per-component compute time charged to the clock. In virtual mode these
/// are the only source of elapsed time besides sleeps and resets; in real
/// mode they add latency on top of actual compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Delays {
    pub observe: Millis,
    pub act: Millis,
    pub store: Millis,
    pub sample: Millis,
    pub grad: Millis,
}

impl Delays {
    pub fn total(&self) -> Millis {
        self.observe + self.act + self.store + self.sample + self.grad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub cycle_ms: Millis,
    pub episodes: u64,
    /// Random-action steps before learning; also the replay warm-up size.
    pub init_steps: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub channel_capacity: usize,
    pub batch_channel_capacity: usize,
    pub delays: Delays,
    /// The sampler drains the transition channel only once this many
    /// transitions are queued (or the run is ending). 1 drains eagerly.
    pub sampler_lag: usize,
    /// The updater never pops a batch.
    pub updater_paused: bool,
    /// Seeds replay sampling and warm-up actions.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Async,
            cycle_ms: 40,
            episodes: 1,
            init_steps: 0,
            batch_size: 128,
            replay_capacity: 108_000,
            channel_capacity: 4096,
            batch_channel_capacity: 2,
            delays: Delays::default(),
            sampler_lag: 1,
            updater_paused: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.cycle_ms == 0 {
            return bad("cycle must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch size and replay capacity must be positive");
        }
        if self.channel_capacity == 0 || self.batch_channel_capacity == 0 {
            return bad("channel capacities must be positive");
        }
        if self.sampler_lag == 0 || self.sampler_lag > self.channel_capacity {
            return bad("sampler lag must lie in [1, channel capacity]");
        }
        Ok(())
    }
}
