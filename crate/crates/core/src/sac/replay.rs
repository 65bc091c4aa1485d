//! FIFO replay buffer with a warm-up threshold.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Transition;

use super::SacError;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    init_steps: usize,
    pushes: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, init_steps: usize, seed: u64) -> Result<Self, SacError> {
        if capacity == 0 {
            return Err(SacError::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            init_steps,
            pushes: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.pushes += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn init_steps(&self) -> usize {
        self.init_steps
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    /// Sampling is allowed once `init_steps` transitions (and at least one)
    /// are stored.
    pub fn is_warm(&self) -> bool {
        !self.items.is_empty() && self.items.len() >= self.init_steps
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>, SacError> {
        if !self.is_warm() {
            return Err(SacError::BufferWarming {
                size: self.items.len(),
                required: self.init_steps.max(1),
            });
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| self.rng.random_range(0..n)).collect())
    }

    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Transition>, SacError> {
        let idx = self.sample_indices(batch_size)?;
        Ok(idx.into_iter().map(|i| self.items[i].clone()).collect())
    }
}
