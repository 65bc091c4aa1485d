//! Per-run records and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::types::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub episode: u64,
    /// Clock time at the start of the step.
    pub t_ms: Millis,
    pub reward: f64,
    pub realized_cycle_ms: Millis,
    pub deadline_missed: bool,
    pub weights_version: u64,
    /// Cumulative transition-channel drops.
    pub drops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    pub update: u64,
    /// Clock time when the update's weights became available.
    pub t_ms: Millis,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Component durations of one interaction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimingRecord {
    pub step_index: u64,
    pub t_observe_ms: Millis,
    pub t_act_ms: Millis,
    pub t_store_ms: Millis,
    pub t_sample_ms: Millis,
    pub t_grad_ms: Millis,
    pub realized_cycle_ms: Millis,
    pub deadline_missed: bool,
}

impl TimingRecord {
    pub fn work_ms(&self) -> Millis {
        self.t_observe_ms + self.t_act_ms + self.t_store_ms + self.t_sample_ms + self.t_grad_ms
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub steps: Vec<StepRow>,
    pub updates: Vec<UpdateRow>,
    pub timing: Vec<TimingRecord>,
    /// Set when the run ended early.
    pub failure: Option<String>,
}

impl RunLog {
    /// Sum of rewards per episode, in episode order.
    pub fn episode_returns(&self) -> Vec<f64> {
        episode_returns(&self.steps)
    }

    pub fn drops(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.drops)
    }

    pub fn mean_realized_cycle_ms(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.realized_cycle_ms as f64).sum::<f64>() / self.steps.len() as f64
    }

    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_rows(&self.steps, out)
    }

    pub fn write_updates_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_rows(&self.updates, out)
    }

    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_rows(&self.timing, out)
    }

    /// Steps, updates and timing CSVs concatenated; handy for byte-level
    /// comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_steps_csv(&mut out).expect("in-memory write");
        self.write_updates_csv(&mut out).expect("in-memory write");
        self.write_timing_csv(&mut out).expect("in-memory write");
        out
    }
}

pub fn episode_returns(steps: &[StepRow]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for s in steps {
        let e = s.episode as usize;
        if out.len() <= e {
            out.resize(e + 1, 0.0);
        }
        out[e] += s.reward;
    }
    out
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
