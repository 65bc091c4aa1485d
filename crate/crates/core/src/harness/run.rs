//! Seeded runs and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::clock::new_clock;
use crate::envsim::VisualReacher;
use crate::pipeline::{self, read_rows, RunLog, StepRow, UpdateRow};
use crate::sac::{ActMode, Agent, Learner, NullLearner, RandomActor, SacActor, SacLearner};

use super::config::{AgentKind, ExperimentConfig};
use super::HarnessError;

/// What one run produced, in a form recomputable from its CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub returns: Vec<f64>,
    pub total_steps: u64,
    pub total_updates: u64,
    pub mean_cycle_ms: f64,
    pub drops: u64,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn from_log(seed: u64, log: &RunLog) -> Self {
        Self::from_rows(seed, &log.steps, log.updates.len() as u64, log.failure.clone())
    }

    fn from_rows(seed: u64, steps: &[StepRow], updates: u64, failure: Option<String>) -> Self {
        let mean_cycle_ms = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|s| s.realized_cycle_ms as f64).sum::<f64>() / steps.len() as f64
        };
        Self {
            seed,
            returns: pipeline::episode_returns(steps),
            total_steps: steps.len() as u64,
            total_updates: updates,
            mean_cycle_ms,
            drops: steps.last().map_or(0, |s| s.drops),
            failure,
        }
    }

    /// Reads a `seed-N` directory.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let seed = seed_of(dir).ok_or_else(|| HarnessError::Aggregate(format!("{}: not a seed-N directory", dir.display())))?;
        let steps: Vec<StepRow> = read_rows(fs::File::open(dir.join("steps.csv"))?)?;
        let updates: Vec<UpdateRow> = read_rows(fs::File::open(dir.join("updates.csv"))?)?;
        let failure = fs::read_to_string(dir.join("failure.txt")).ok();
        Ok(Self::from_rows(seed, &steps, updates.len() as u64, failure))
    }
}

fn seed_of(dir: &Path) -> Option<u64> {
    dir.file_name()?.to_str()?.strip_prefix("seed-")?.parse().ok()
}

pub fn run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output.join(cfg.setting.name()).join(format!("seed-{seed}"))
}

/// Writes the three CSVs (and `failure.txt` when the run ended early).
pub fn write_run(dir: &Path, log: &RunLog) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    log.write_steps_csv(fs::File::create(dir.join("steps.csv"))?)?;
    log.write_updates_csv(fs::File::create(dir.join("updates.csv"))?)?;
    log.write_timing_csv(fs::File::create(dir.join("timing.csv"))?)?;
    let failure = dir.join("failure.txt");
    match &log.failure {
        Some(f) => fs::write(failure, f)?,
        None if failure.exists() => fs::remove_file(failure)?,
        None => {}
    }
    Ok(())
}

/// Independent seeds for the environment, the learner and the actor.
fn streams(seed: u64) -> [u64; 3] {
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xd1b5_4a32_d192_ed03;
    std::array::from_fn(|_| {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

/// Executes one seed and returns its log without writing anything.
pub fn run_one(cfg: &ExperimentConfig, seed: u64) -> Result<RunLog, HarnessError> {
    let [s_env, s_learn, s_act] = streams(seed);
    let env = VisualReacher::new(cfg.env_config(), s_env).map_err(|e| HarnessError::Config(e.to_string()))?;
    let (mut learner, mut agent): (Box<dyn Learner>, Box<dyn Agent>) = match cfg.agent {
        AgentKind::Sac => {
            let l = SacLearner::<f32>::new(cfg.architecture(), cfg.hyper(), s_learn)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let a = SacActor::new(cfg.architecture(), &l.snapshot(), ActMode::Stochastic, s_act)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            (Box::new(l), Box::new(a))
        }
        AgentKind::Random => (Box::new(NullLearner::new()), Box::new(RandomActor::new(s_act))),
    };
    let out = pipeline::run(
        &cfg.pipeline_config(seed),
        env,
        learner.as_mut(),
        agent.as_mut(),
        new_clock(cfg.clock),
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(out.log)
}

/// Runs every seed, writing each run's CSVs under the output directory.
/// A failed run is recorded in its summary and the remaining seeds still
/// run. Up to `jobs` seeds execute at once.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RunSummary>, HarnessError> {
    cfg.validate()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, HarnessError>>>> =
        Mutex::new((0..cfg.seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cfg.seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let r = run_one(cfg, seed).and_then(|log| {
                    write_run(&run_dir(cfg, seed), &log)?;
                    Ok(RunSummary::from_log(seed, &log))
                });
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

/// Loads every `seed-N` run under `dir`, ordered by seed.
pub fn load_runs(dir: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() && seed_of(&p).is_some() {
            out.push(RunSummary::load(&p)?);
        }
    }
    out.sort_by_key(|r| r.seed);
    Ok(out)
}
