//! Transition and batch queues between workers.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use crate::clock::{ClockError, WaitKey, WorkerClock};
use crate::types::Transition;

/// Notified on every transition push.
pub const KEY_TRANSITIONS: WaitKey = 1;
/// Notified when a batch is enqueued.
pub const KEY_BATCH_READY: WaitKey = 2;
/// Notified when a batch is dequeued.
pub const KEY_BATCH_SPACE: WaitKey = 3;

/// Bounded FIFO whose producer never blocks: a push into a full channel
/// evicts the oldest element and counts a drop.
#[derive(Debug)]
pub struct TransitionChannel {
    items: Mutex<VecDeque<Transition>>,
    capacity: usize,
    drops: AtomicU64,
}

impl TransitionChannel {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "channel capacity must be positive");
        Self {
            items: Mutex::new(VecDeque::with_capacity(capacity.min(4096))),
            capacity,
            drops: AtomicU64::new(0),
        }
    }

    pub fn push(&self, t: Transition, clock: &WorkerClock) {
        {
            let mut q = self.items.lock().unwrap();
            if q.len() == self.capacity {
                q.pop_front();
                self.drops.fetch_add(1, Ordering::Relaxed);
            }
            q.push_back(t);
        }
        clock.notify(KEY_TRANSITIONS);
    }

    pub fn len(&self) -> usize {
        self.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn drops(&self) -> u64 {
        self.drops.load(Ordering::Relaxed)
    }

    /// Takes everything currently queued, oldest first.
    pub fn drain(&self) -> Vec<Transition> {
        self.items.lock().unwrap().drain(..).collect()
    }
}

/// Bounded FIFO of minibatches with a blocking producer and consumer.
#[derive(Debug)]
pub struct BatchChannel {
    items: Mutex<VecDeque<Vec<Transition>>>,
    capacity: usize,
}

impl BatchChannel {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "channel capacity must be positive");
        Self {
            items: Mutex::new(VecDeque::with_capacity(capacity)),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Blocks while full. Returns `false` (dropping the batch) if `stop` is
    /// raised first.
    pub fn push(&self, batch: Vec<Transition>, clock: &WorkerClock, stop: &AtomicBool) -> Result<bool, ClockError> {
        loop {
            let ticket = clock.ticket(KEY_BATCH_SPACE);
            if stop.load(Ordering::SeqCst) {
                return Ok(false);
            }
            {
                let mut q = self.items.lock().unwrap();
                if q.len() < self.capacity {
                    q.push_back(batch);
                    drop(q);
                    clock.notify(KEY_BATCH_READY);
                    return Ok(true);
                }
            }
            clock.park(KEY_BATCH_SPACE, ticket)?;
        }
    }

    /// Blocks while empty. Returns `None` if `stop` is raised first.
    pub fn pop(&self, clock: &WorkerClock, stop: &AtomicBool) -> Result<Option<Vec<Transition>>, ClockError> {
        loop {
            let ticket = clock.ticket(KEY_BATCH_READY);
            if stop.load(Ordering::SeqCst) {
                return Ok(None);
            }
            let popped = self.items.lock().unwrap().pop_front();
            if let Some(b) = popped {
                clock.notify(KEY_BATCH_SPACE);
                return Ok(Some(b));
            }
            clock.park(KEY_BATCH_READY, ticket)?;
        }
    }
}
