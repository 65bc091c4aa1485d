//! The synchronous and asynchronous run loops.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::clock::{Clock, ClockError, ClockMode, WorkerClock};
use crate::envsim::VisualReacher;
use crate::sac::{Agent, Learner, RandomActor, ReplayBuffer};
use crate::types::{Millis, Transition};

use super::channel::{BatchChannel, TransitionChannel};
use super::log::{RunLog, StepRow, TimingRecord, UpdateRow};
use super::store::{StoreReader, WeightStore};
use super::{Mode, PipelineConfig, PipelineError, INTERACTION, SAMPLER, UPDATER};

/// Parked on by a paused updater; only `notify_all` wakes it.
const KEY_PAUSED: crate::clock::WaitKey = 4;

pub struct RunOutput {
    pub log: RunLog,
    /// Final replay contents.
    pub buffer: ReplayBuffer,
}

fn warmup_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Dispatches on `cfg.mode`.
pub fn run(
    cfg: &PipelineConfig,
    env: VisualReacher,
    learner: &mut dyn Learner,
    agent: &mut dyn Agent,
    clock: Arc<dyn Clock>,
) -> Result<RunOutput, PipelineError> {
    match cfg.mode {
        Mode::Sync => run_sync(cfg, env, learner, agent, clock),
        Mode::Async => run_async(cfg, env, learner, agent, clock),
    }
}

fn check(cfg: &PipelineConfig, env: &VisualReacher) -> Result<(), PipelineError> {
    cfg.validate()?;
    if env.config().cycle_ms != cfg.cycle_ms {
        return Err(PipelineError::Config(format!(
            "environment cycle {} ms differs from pipeline cycle {} ms",
            env.config().cycle_ms,
            cfg.cycle_ms
        )));
    }
    Ok(())
}

/// Ends a cycle that started at `t0`. Returns the realized cycle length and
/// whether the deadline was missed.
fn finish_cycle(clock: &WorkerClock, t0: Millis, cycle: Millis) -> Result<(Millis, bool), ClockError> {
    let elapsed = clock.now() - t0;
    if elapsed > cycle {
        return Ok((elapsed, true));
    }
    match clock.sleep_until(t0 + cycle) {
        Ok(()) => Ok((cycle, false)),
        // Real time can slip past the boundary between the check and the sleep.
        Err(ClockError::DeadlineMissed { .. }) => Ok((clock.now() - t0, true)),
        Err(e) => Err(e),
    }
}

/// State shared by both loops on the acting side.
struct Actor<'a> {
    agent: &'a mut dyn Agent,
    warmup: RandomActor,
    reader: StoreReader<'a>,
    version: u64,
}

impl Actor<'_> {
    fn refresh(&mut self) -> Result<(), PipelineError> {
        if let Some(snap) = self.reader.fetch_if_newer()? {
            self.agent.load(&snap)?;
            self.version = snap.version();
        }
        Ok(())
    }
}

/// One environment step up to and including the store phase.
struct Stepped {
    transition: Transition,
    timing: TimingRecord,
}

fn interact(
    cfg: &PipelineConfig,
    clock: &WorkerClock,
    env: &mut VisualReacher,
    actor: &mut Actor<'_>,
    obs: &crate::types::Observation,
    step: u64,
) -> Result<Stepped, PipelineError> {
    let t0 = clock.now();
    clock.spend(cfg.delays.observe)?;
    let t1 = clock.now();
    actor.refresh()?;
    let action = if step < cfg.init_steps {
        actor.warmup.sample()
    } else {
        actor.agent.act(obs)?
    };
    clock.spend(cfg.delays.act)?;
    let t2 = clock.now();
    let (next_obs, reward) = env.step(&action)?;
    let transition = Transition {
        obs: obs.clone(),
        action,
        reward,
        next_obs,
        terminal: env.is_episode_over(),
    };
    clock.spend(cfg.delays.store)?;
    let t3 = clock.now();
    Ok(Stepped {
        transition,
        timing: TimingRecord {
            step_index: step,
            t_observe_ms: t1 - t0,
            t_act_ms: t2 - t1,
            t_store_ms: t3 - t2,
            ..Default::default()
        },
    })
}

/// Observe, act, store, sample and update in one worker, then wait for the
/// cycle boundary. A step whose work overruns the cycle is recorded as a
/// miss and the next step starts immediately.
pub fn run_sync(
    cfg: &PipelineConfig,
    mut env: VisualReacher,
    learner: &mut dyn Learner,
    agent: &mut dyn Agent,
    clock: Arc<dyn Clock>,
) -> Result<RunOutput, PipelineError> {
    check(cfg, &env)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.init_steps as usize, cfg.seed)?;
    let clock = WorkerClock::new(clock, INTERACTION);
    env.attach_clock(clock.clone());
    let store = WeightStore::new();
    let mut log = RunLog::default();
    let mut actor = Actor {
        agent,
        warmup: RandomActor::new(warmup_seed(cfg.seed)),
        reader: store.reader(),
        version: 0,
    };
    let result = (|| -> Result<(), PipelineError> {
        clock.enter()?;
        let mut step = 0u64;
        for episode in 0..cfg.episodes {
            let mut obs = env.reset()?;
            while !env.is_episode_over() {
                let t0 = clock.now();
                let version = actor.version;
                let Stepped { transition, mut timing } = interact(cfg, &clock, &mut env, &mut actor, &obs, step)?;
                let reward = transition.reward;
                obs = transition.next_obs.clone();
                buffer.push(transition);
                if step >= cfg.init_steps {
                    let ts = clock.now();
                    let batch = buffer.sample(cfg.batch_size)?;
                    clock.spend(cfg.delays.sample)?;
                    let tg = clock.now();
                    let m = learner.update(&batch)?;
                    clock.spend(cfg.delays.grad)?;
                    let te = clock.now();
                    store.publish(learner.snapshot())?;
                    timing.t_sample_ms = tg - ts;
                    timing.t_grad_ms = te - tg;
                    log.updates.push(UpdateRow {
                        update: m.update,
                        t_ms: te,
                        critic_loss: m.critic_loss,
                        actor_loss: m.actor_loss,
                        alpha: m.alpha,
                    });
                }
                let (realized, missed) = finish_cycle(&clock, t0, cfg.cycle_ms)?;
                timing.realized_cycle_ms = realized;
                timing.deadline_missed = missed;
                log.timing.push(timing);
                log.steps.push(StepRow {
                    step,
                    episode,
                    t_ms: t0,
                    reward,
                    realized_cycle_ms: realized,
                    deadline_missed: missed,
                    weights_version: version,
                    drops: 0,
                });
                step += 1;
            }
        }
        Ok(())
    })();
    clock.leave();
    if let Err(e) = result {
        log.failure = Some(e.to_string());
    }
    Ok(RunOutput { log, buffer })
}

/// Raises the stop flag, wakes everyone and deregisters when a worker exits,
/// including by panic.
struct ExitGuard<'a> {
    clock: &'a WorkerClock,
    stop: &'a AtomicBool,
}

impl Drop for ExitGuard<'_> {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.clock.notify_all();
        self.clock.leave();
    }
}

/// Interaction, sampling and updating on three workers. The interaction
/// worker never waits on learning; new weights are picked up at the start of
/// the next step after they are published.
pub fn run_async(
    cfg: &PipelineConfig,
    mut env: VisualReacher,
    learner: &mut dyn Learner,
    agent: &mut dyn Agent,
    clock: Arc<dyn Clock>,
) -> Result<RunOutput, PipelineError> {
    check(cfg, &env)?;
    if clock.mode() == ClockMode::Virtual && cfg.delays.sample + cfg.delays.grad == 0 && !cfg.updater_paused {
        return Err(PipelineError::Config(
            "a virtual-clock async run needs a positive sample or grad delay".into(),
        ));
    }
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.init_steps as usize, cfg.seed)?;
    let c_int = WorkerClock::new(clock.clone(), INTERACTION);
    let c_smp = WorkerClock::new(clock.clone(), SAMPLER);
    let c_upd = WorkerClock::new(clock, UPDATER);
    env.attach_clock(c_int.clone());

    let transitions = TransitionChannel::new(cfg.channel_capacity);
    let batches = BatchChannel::new(cfg.batch_channel_capacity);
    let store = WeightStore::new();
    let stop = AtomicBool::new(false);
    let mut log = RunLog::default();
    let mut errors: Vec<PipelineError> = Vec::new();

    std::thread::scope(|s| {
        let (steps, timings) = (&mut log.steps, &mut log.timing);
        let updates = &mut log.updates;
        let buffer = &mut buffer;
        let (transitions, batches, store, stop) = (&transitions, &batches, &store, &stop);

        let interaction = s.spawn(|| -> Result<(), PipelineError> {
            let _g = ExitGuard { clock: &c_int, stop };
            c_int.enter()?;
            let mut actor = Actor {
                agent,
                warmup: RandomActor::new(warmup_seed(cfg.seed)),
                reader: store.reader(),
                version: 0,
            };
            let mut step = 0u64;
            for episode in 0..cfg.episodes {
                if stop.load(Ordering::SeqCst) {
                    return Ok(());
                }
                let mut obs = env.reset()?;
                while !env.is_episode_over() {
                    if stop.load(Ordering::SeqCst) {
                        return Ok(());
                    }
                    let t0 = c_int.now();
                    let version = actor.version;
                    let Stepped { transition, mut timing } = interact(cfg, &c_int, &mut env, &mut actor, &obs, step)?;
                    let reward = transition.reward;
                    obs = transition.next_obs.clone();
                    transitions.push(transition, &c_int);
                    let (realized, missed) = finish_cycle(&c_int, t0, cfg.cycle_ms)?;
                    timing.realized_cycle_ms = realized;
                    timing.deadline_missed = missed;
                    timings.push(timing);
                    steps.push(StepRow {
                        step,
                        episode,
                        t_ms: t0,
                        reward,
                        realized_cycle_ms: realized,
                        deadline_missed: missed,
                        weights_version: version,
                        drops: transitions.drops(),
                    });
                    step += 1;
                }
            }
            Ok(())
        });

        let sampler = s.spawn(|| -> Result<(), PipelineError> {
            let _g = ExitGuard { clock: &c_smp, stop };
            c_smp.enter()?;
            loop {
                let ticket = c_smp.ticket(super::KEY_TRANSITIONS);
                let stopping = stop.load(Ordering::SeqCst);
                if stopping || transitions.len() >= cfg.sampler_lag {
                    for t in transitions.drain() {
                        buffer.push(t);
                    }
                }
                if stopping {
                    return Ok(());
                }
                if buffer.is_warm() {
                    c_smp.spend(cfg.delays.sample)?;
                    let batch = buffer.sample(cfg.batch_size)?;
                    batches.push(batch, &c_smp, stop)?;
                } else {
                    c_smp.park(super::KEY_TRANSITIONS, ticket)?;
                }
            }
        });

        let updater = s.spawn(|| -> Result<(), PipelineError> {
            let _g = ExitGuard { clock: &c_upd, stop };
            c_upd.enter()?;
            if cfg.updater_paused {
                while !stop.load(Ordering::SeqCst) {
                    let ticket = c_upd.ticket(KEY_PAUSED);
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    c_upd.park(KEY_PAUSED, ticket)?;
                }
                return Ok(());
            }
            while let Some(batch) = batches.pop(&c_upd, stop)? {
                c_upd.spend(cfg.delays.grad)?;
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let m = learner.update(&batch)?;
                store.publish(learner.snapshot())?;
                updates.push(UpdateRow {
                    update: m.update,
                    t_ms: c_upd.now(),
                    critic_loss: m.critic_loss,
                    actor_loss: m.actor_loss,
                    alpha: m.alpha,
                });
            }
            Ok(())
        });

        for (name, h) in [("interaction", interaction), ("sampler", sampler), ("updater", updater)] {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => errors.push(e),
                Err(_) => errors.push(PipelineError::WorkerPanic(name)),
            }
        }
    });

    log.failure = errors.first().map(|e| e.to_string());
    Ok(RunOutput { log, buffer })
}
