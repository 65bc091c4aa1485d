//! Wall-clock and deterministic virtual-clock time sources.
//!
//! Workers never read `Instant` directly. They hold a [`WorkerClock`] and call
//! `now`, `sleep_until`, `spend` and `park`, so the same worker code runs either
//! against real time or against a discrete-event scheduler.
//!
//! In virtual mode exactly one registered worker executes at any moment. A
//! worker gives up the CPU only when it sleeps, parks on a wait key, or leaves;
//! the scheduler then resumes the worker with the smallest `(wake_time,
//! worker_id)` pair. Given the same inputs the resulting interleaving, and
//! therefore the event log, is identical on every execution.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::types::Millis;

pub type WorkerId = u32;

/// Identifies a condition workers can park on (e.g. "batch available").
pub type WaitKey = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Real,
    Virtual,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClockError {
    #[error("worker {worker} asked to sleep until {target} ms but the clock is already at {now} ms")]
    DeadlineMissed {
        worker: WorkerId,
        now: Millis,
        target: Millis,
    },
    #[error("virtual scheduler deadlocked: every live worker is parked")]
    Deadlock,
    #[error("worker {0} is not registered with the virtual scheduler")]
    UnknownWorker(WorkerId),
}

/// Kind of scheduling event recorded by the virtual clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Resume,
    Leave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockEvent {
    pub t_ms: Millis,
    pub worker: WorkerId,
    pub kind: EventKind,
}

pub trait Clock: Send + Sync {
    fn mode(&self) -> ClockMode;

    fn now_ms(&self) -> Millis;

    /// Declares a worker. In virtual mode every worker must be registered
    /// before any worker calls [`Clock::enter`].
    fn register(&self, worker: WorkerId);

    /// Blocks until the worker is allowed to run.
    fn enter(&self, worker: WorkerId) -> Result<(), ClockError>;

    /// Removes the worker from scheduling.
    fn leave(&self, worker: WorkerId);

    fn sleep_until(&self, worker: WorkerId, t: Millis) -> Result<(), ClockError>;

    /// Advances by a declared compute duration.
    fn spend(&self, worker: WorkerId, d: Millis) -> Result<(), ClockError> {
        let t = self.now_ms() + d;
        self.sleep_until(worker, t)
    }

    /// Current generation of `key`; pass it to [`Clock::park`] so that a notify
    /// issued between the check and the park is not lost.
    fn ticket(&self, key: WaitKey) -> u64;

    /// Suspends until `key` is notified after `ticket` was taken. Callers must
    /// re-check their condition on return.
    fn park(&self, worker: WorkerId, key: WaitKey, ticket: u64) -> Result<(), ClockError>;

    fn notify(&self, key: WaitKey);

    /// Wakes every parked worker, whatever it waits on.
    fn notify_all(&self);
}

/// Wall time measured from construction, in whole milliseconds.
pub struct RealClock {
    start: Instant,
    generations: Mutex<HashMap<WaitKey, u64>>,
    cv: Condvar,
}

impl RealClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            generations: Mutex::new(HashMap::new()),
            cv: Condvar::new(),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn mode(&self) -> ClockMode {
        ClockMode::Real
    }

    fn now_ms(&self) -> Millis {
        self.start.elapsed().as_millis() as Millis
    }

    fn register(&self, _worker: WorkerId) {}

    fn enter(&self, _worker: WorkerId) -> Result<(), ClockError> {
        Ok(())
    }

    fn leave(&self, _worker: WorkerId) {}

    fn sleep_until(&self, worker: WorkerId, t: Millis) -> Result<(), ClockError> {
        let now = self.now_ms();
        if t < now {
            return Err(ClockError::DeadlineMissed {
                worker,
                now,
                target: t,
            });
        }
        let deadline = self.start + Duration::from_millis(t);
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Ok(());
            }
            std::thread::sleep(deadline - now);
        }
    }

    fn ticket(&self, key: WaitKey) -> u64 {
        *self.generations.lock().unwrap().get(&key).unwrap_or(&0)
    }

    fn park(&self, _worker: WorkerId, key: WaitKey, ticket: u64) -> Result<(), ClockError> {
        let gens = self.generations.lock().unwrap();
        // Timed wait: callers re-check their condition (including stop flags).
        let _ = self
            .cv
            .wait_timeout_while(gens, Duration::from_millis(20), |g| {
                *g.get(&key).unwrap_or(&0) == ticket
            })
            .unwrap();
        Ok(())
    }

    fn notify(&self, key: WaitKey) {
        *self.generations.lock().unwrap().entry(key).or_insert(0) += 1;
        self.cv.notify_all();
    }

    fn notify_all(&self) {
        let mut gens = self.generations.lock().unwrap();
        for g in gens.values_mut() {
            *g += 1;
        }
        drop(gens);
        self.cv.notify_all();
    }
}

#[derive(Default)]
struct Scheduler {
    now: Millis,
    queue: BinaryHeap<Reverse<(Millis, WorkerId)>>,
    running: Option<WorkerId>,
    alive: BTreeSet<WorkerId>,
    parked: BTreeMap<WaitKey, BTreeSet<WorkerId>>,
    generations: HashMap<WaitKey, u64>,
    deadlocked: bool,
    log: Vec<ClockEvent>,
}

impl Scheduler {
    fn dispatch(&mut self) {
        self.running = None;
        match self.queue.pop() {
            Some(Reverse((t, worker))) => {
                debug_assert!(t >= self.now);
                self.now = self.now.max(t);
                self.running = Some(worker);
                self.log.push(ClockEvent {
                    t_ms: self.now,
                    worker,
                    kind: EventKind::Resume,
                });
            }
            None => {
                if self.parked.values().any(|s| !s.is_empty()) {
                    self.deadlocked = true;
                }
            }
        }
    }
}

/// Deterministic discrete-event clock.
///
/// Simultaneous wake-ups resume in ascending worker id order.
pub struct VirtualClock {
    state: Mutex<Scheduler>,
    cv: Condvar,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            state: Mutex::new(Scheduler::default()),
            cv: Condvar::new(),
        }
    }

    /// Every resume/leave the scheduler performed, in order.
    pub fn event_log(&self) -> Vec<ClockEvent> {
        self.state.lock().unwrap().log.clone()
    }

    fn wait_turn<'a>(
        &'a self,
        mut st: MutexGuard<'a, Scheduler>,
        worker: WorkerId,
    ) -> Result<MutexGuard<'a, Scheduler>, ClockError> {
        if st.running.is_none() && !st.deadlocked {
            st.dispatch();
            self.cv.notify_all();
        }
        while st.running != Some(worker) {
            if st.deadlocked {
                return Err(ClockError::Deadlock);
            }
            st = self.cv.wait(st).unwrap();
        }
        Ok(st)
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn mode(&self) -> ClockMode {
        ClockMode::Virtual
    }

    fn now_ms(&self) -> Millis {
        self.state.lock().unwrap().now
    }

    fn register(&self, worker: WorkerId) {
        let mut st = self.state.lock().unwrap();
        if st.alive.insert(worker) {
            let now = st.now;
            st.queue.push(Reverse((now, worker)));
        }
    }

    fn enter(&self, worker: WorkerId) -> Result<(), ClockError> {
        let st = self.state.lock().unwrap();
        if !st.alive.contains(&worker) {
            return Err(ClockError::UnknownWorker(worker));
        }
        self.wait_turn(st, worker).map(|_| ())
    }

    fn leave(&self, worker: WorkerId) {
        let mut st = self.state.lock().unwrap();
        if !st.alive.remove(&worker) {
            return;
        }
        for set in st.parked.values_mut() {
            set.remove(&worker);
        }
        st.queue.retain(|Reverse((_, w))| *w != worker);
        let now = st.now;
        st.log.push(ClockEvent {
            t_ms: now,
            worker,
            kind: EventKind::Leave,
        });
        if st.running == Some(worker) {
            st.dispatch();
        }
        self.cv.notify_all();
    }

    fn sleep_until(&self, worker: WorkerId, t: Millis) -> Result<(), ClockError> {
        let mut st = self.state.lock().unwrap();
        if st.running != Some(worker) {
            // Not yet scheduled (first call without enter): wait for our turn.
            if !st.alive.contains(&worker) {
                return Err(ClockError::UnknownWorker(worker));
            }
            st = self.wait_turn(st, worker)?;
        }
        if t < st.now {
            return Err(ClockError::DeadlineMissed {
                worker,
                now: st.now,
                target: t,
            });
        }
        st.queue.push(Reverse((t, worker)));
        st.dispatch();
        self.cv.notify_all();
        self.wait_turn(st, worker).map(|_| ())
    }

    fn ticket(&self, key: WaitKey) -> u64 {
        *self.state.lock().unwrap().generations.get(&key).unwrap_or(&0)
    }

    fn park(&self, worker: WorkerId, key: WaitKey, ticket: u64) -> Result<(), ClockError> {
        let mut st = self.state.lock().unwrap();
        if st.generations.get(&key).copied().unwrap_or(0) != ticket {
            return Ok(());
        }
        st.parked.entry(key).or_default().insert(worker);
        st.dispatch();
        self.cv.notify_all();
        self.wait_turn(st, worker).map(|_| ())
    }

    fn notify(&self, key: WaitKey) {
        let mut st = self.state.lock().unwrap();
        *st.generations.entry(key).or_insert(0) += 1;
        let now = st.now;
        if let Some(set) = st.parked.remove(&key) {
            for w in set {
                st.queue.push(Reverse((now, w)));
            }
        }
    }

    fn notify_all(&self) {
        let mut st = self.state.lock().unwrap();
        for g in st.generations.values_mut() {
            *g += 1;
        }
        let now = st.now;
        let parked = std::mem::take(&mut st.parked);
        for w in parked.into_values().flatten() {
            st.queue.push(Reverse((now, w)));
        }
        if st.running.is_none() && !st.deadlocked {
            st.dispatch();
        }
        self.cv.notify_all();
    }
}

/// A worker's handle on a shared clock.
#[derive(Clone)]
pub struct WorkerClock {
    clock: Arc<dyn Clock>,
    id: WorkerId,
}

impl WorkerClock {
    /// Registers `id` with the clock.
    pub fn new(clock: Arc<dyn Clock>, id: WorkerId) -> Self {
        clock.register(id);
        Self { clock, id }
    }

    pub fn id(&self) -> WorkerId {
        self.id
    }

    pub fn mode(&self) -> ClockMode {
        self.clock.mode()
    }

    pub fn shared(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    pub fn enter(&self) -> Result<(), ClockError> {
        self.clock.enter(self.id)
    }

    pub fn leave(&self) {
        self.clock.leave(self.id)
    }

    pub fn sleep_until(&self, t: Millis) -> Result<(), ClockError> {
        self.clock.sleep_until(self.id, t)
    }

    pub fn spend(&self, d: Millis) -> Result<(), ClockError> {
        if d == 0 && self.clock.mode() == ClockMode::Real {
            return Ok(());
        }
        self.clock.spend(self.id, d)
    }

    pub fn ticket(&self, key: WaitKey) -> u64 {
        self.clock.ticket(key)
    }

    pub fn park(&self, key: WaitKey, ticket: u64) -> Result<(), ClockError> {
        self.clock.park(self.id, key, ticket)
    }

    pub fn notify(&self, key: WaitKey) {
        self.clock.notify(key)
    }

    pub fn notify_all(&self) {
        self.clock.notify_all()
    }
}

/// Convenience constructor for either mode.
pub fn new_clock(mode: ClockMode) -> Arc<dyn Clock> {
    match mode {
        ClockMode::Real => Arc::new(RealClock::new()),
        ClockMode::Virtual => Arc::new(VirtualClock::new()),
    }
}
