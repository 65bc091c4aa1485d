//! Experiment configuration files.
//!
//! One `key = value` per line; `#` starts a comment. Keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `setting` | `async-baseline`, `sync-baseline`, `async-highres`, `sync-highres` | required |
//! | `scale` | `paper` or `desk` | `paper` |
//! | `width`, `height` | image size in pixels | setting's size |
//! | `batch_size` | minibatch size | setting's batch |
//! | `cycle_ms` | action cycle time | setting's cycle |
//! | `episode_ms`, `reset_ms` | episode and reset durations | 6000, 4000 |
//! | `training_minutes` | interaction time, resets excluded | 72 (paper), 30 (desk) |
//! | `seeds` | comma-separated list | `0` |
//! | `clock` | `virtual` or `real` | `virtual` |
//! | `agent` | `sac` or `random` (uniform actions, no learning) | `sac` |
//! | `init_steps` | random-action warm-up steps | 5000/108000 of the run |
//! | `replay_capacity` | replay buffer size | whole run |
//! | `delay_observe` .. `delay_grad` | injected compute times, ms | 0 |
//! | `sampler_lag`, `channel_capacity` | async transport | 1, 4096 |
//! | `hidden`, `feature_dim` | trunk width (two layers) and encoder projection | 128, 50 |
//! | `lr` | Adam step size for every optimizer | 3e-4 |
//! | `init_temperature` | starting entropy temperature | 0.1 |
//! | `velocity_scale_cm_s`, `noise`, `red_min`, `other_max`, `kinematics` | environment | built-in |
//! | `output` | directory for run artifacts | `runs` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::clock::ClockMode;
use crate::envsim::EnvConfig;
use crate::nn::Architecture;
use crate::pipeline::{Delays, Mode, PipelineConfig};
use crate::sac::SacHyper;
use crate::types::{horizon_steps, init_steps_for, JOINTS};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    AsyncBaseline,
    SyncBaseline,
    AsyncHighres,
    SyncHighres,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::AsyncBaseline,
        Setting::SyncBaseline,
        Setting::AsyncHighres,
        Setting::SyncHighres,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::AsyncBaseline => "async-baseline",
            Setting::SyncBaseline => "sync-baseline",
            Setting::AsyncHighres => "async-highres",
            Setting::SyncHighres => "sync-highres",
        }
    }

    pub fn parse(s: &str) -> Option<Setting> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn mode(self) -> Mode {
        match self {
            Setting::AsyncBaseline | Setting::AsyncHighres => Mode::Async,
            Setting::SyncBaseline | Setting::SyncHighres => Mode::Sync,
        }
    }

    pub fn is_highres(self) -> bool {
        matches!(self, Setting::AsyncHighres | Setting::SyncHighres)
    }

    /// `(width, height, batch, cycle_ms)` of the physical-rig setting.
    pub fn paper_geometry(self) -> (usize, usize, usize, u64) {
        match self {
            Setting::AsyncBaseline => (160, 90, 128, 40),
            Setting::SyncBaseline => (160, 90, 128, 75),
            Setting::AsyncHighres => (320, 180, 80, 40),
            Setting::SyncHighres => (320, 180, 80, 80),
        }
    }

    /// Desk-scale defaults: 40x24 images (80x48 for high resolution), batch
    /// 32, sync cycle stretched to 120 ms.
    pub fn desk_geometry(self) -> (usize, usize, usize, u64) {
        let (w, h) = if self.is_highres() { (80, 48) } else { (40, 24) };
        let cycle = if self.mode() == Mode::Async { 40 } else { 120 };
        (w, h, 32, cycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Sac,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub scale: Scale,
    pub width: usize,
    pub height: usize,
    pub batch_size: usize,
    pub cycle_ms: u64,
    pub episode_ms: u64,
    pub reset_ms: u64,
    pub training_minutes: f64,
    pub seeds: Vec<u64>,
    pub clock: ClockMode,
    pub agent: AgentKind,
    pub init_steps: Option<u64>,
    pub replay_capacity: Option<usize>,
    pub delays: Delays,
    pub sampler_lag: usize,
    pub channel_capacity: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub lr: f64,
    pub init_temperature: f64,
    pub env: EnvConfig,
    pub output: PathBuf,
}

const KEYS: &[&str] = &[
    "setting",
    "scale",
    "width",
    "height",
    "batch_size",
    "cycle_ms",
    "episode_ms",
    "reset_ms",
    "training_minutes",
    "seeds",
    "clock",
    "agent",
    "init_steps",
    "replay_capacity",
    "delay_observe",
    "delay_act",
    "delay_store",
    "delay_sample",
    "delay_grad",
    "sampler_lag",
    "channel_capacity",
    "hidden",
    "feature_dim",
    "lr",
    "init_temperature",
    "velocity_scale_cm_s",
    "noise",
    "red_min",
    "other_max",
    "kinematics",
    "output",
];

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Splits `key = value` lines into a map. Later lines win.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(cfg_err(format!("line {}: unknown key `{k}`", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Applies a `key=val` override.
pub fn apply_override(pairs: &mut BTreeMap<String, String>, spec: &str) -> Result<(), HarnessError> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override `{spec}` is not key=val")))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(cfg_err(format!("unknown key `{k}`")));
    }
    pairs.insert(k.to_string(), v.trim().to_string());
    Ok(())
}

fn num<T: std::str::FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, HarnessError> {
    pairs
        .get(key)
        .map(|v| v.parse::<T>().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{v}`"))))
        .transpose()
}

fn list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{s}`"))))
        .collect()
}

impl ExperimentConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, HarnessError> {
        let setting_name = pairs.get("setting").ok_or_else(|| cfg_err("missing `setting`"))?;
        let setting =
            Setting::parse(setting_name).ok_or_else(|| cfg_err(format!("unknown setting `{setting_name}`")))?;
        let scale = match pairs.get("scale").map(String::as_str) {
            None | Some("paper") => Scale::Paper,
            Some("desk") => Scale::Desk,
            Some(s) => return Err(cfg_err(format!("unknown scale `{s}`"))),
        };
        let (w, h, b, c) = match scale {
            Scale::Paper => setting.paper_geometry(),
            Scale::Desk => setting.desk_geometry(),
        };
        let clock = match pairs.get("clock").map(String::as_str) {
            None | Some("virtual") => ClockMode::Virtual,
            Some("real") => ClockMode::Real,
            Some(s) => return Err(cfg_err(format!("unknown clock `{s}`"))),
        };
        let agent = match pairs.get("agent").map(String::as_str) {
            None | Some("sac") => AgentKind::Sac,
            Some("random") => AgentKind::Random,
            Some(s) => return Err(cfg_err(format!("unknown agent `{s}`"))),
        };
        let seeds = match pairs.get("seeds") {
            Some(v) => list(v, "seeds")?,
            None => vec![0],
        };

        let mut env = EnvConfig::default();
        if let Some(v) = num(pairs, "velocity_scale_cm_s")? {
            env.velocity_scale_cm_s = v;
        }
        if let Some(v) = num(pairs, "noise")? {
            env.noise = v;
        }
        if let Some(v) = num(pairs, "red_min")? {
            env.threshold.red_min = v;
        }
        if let Some(v) = num(pairs, "other_max")? {
            env.threshold.other_max = v;
        }
        if let Some(v) = pairs.get("kinematics") {
            let k: Vec<f64> = list(v, "kinematics")?;
            if k.len() != 3 * JOINTS {
                return Err(cfg_err(format!("`kinematics` needs {} entries, got {}", 3 * JOINTS, k.len())));
            }
            for (r, row) in env.kinematics.iter_mut().enumerate() {
                row.copy_from_slice(&k[r * JOINTS..(r + 1) * JOINTS]);
            }
        }

        let cfg = Self {
            setting,
            scale,
            width: num(pairs, "width")?.unwrap_or(w),
            height: num(pairs, "height")?.unwrap_or(h),
            batch_size: num(pairs, "batch_size")?.unwrap_or(b),
            cycle_ms: num(pairs, "cycle_ms")?.unwrap_or(c),
            episode_ms: num(pairs, "episode_ms")?.unwrap_or(6000),
            reset_ms: num(pairs, "reset_ms")?.unwrap_or(4000),
            training_minutes: num(pairs, "training_minutes")?.unwrap_or(match scale {
                Scale::Paper => 72.0,
                Scale::Desk => 30.0,
            }),
            seeds,
            clock,
            agent,
            init_steps: num(pairs, "init_steps")?,
            replay_capacity: num(pairs, "replay_capacity")?,
            delays: Delays {
                observe: num(pairs, "delay_observe")?.unwrap_or(0),
                act: num(pairs, "delay_act")?.unwrap_or(0),
                store: num(pairs, "delay_store")?.unwrap_or(0),
                sample: num(pairs, "delay_sample")?.unwrap_or(0),
                grad: num(pairs, "delay_grad")?.unwrap_or(0),
            },
            sampler_lag: num(pairs, "sampler_lag")?.unwrap_or(1),
            channel_capacity: num(pairs, "channel_capacity")?.unwrap_or(4096),
            hidden: num(pairs, "hidden")?.unwrap_or(128),
            feature_dim: num(pairs, "feature_dim")?.unwrap_or(50),
            lr: num(pairs, "lr")?.unwrap_or(3e-4),
            init_temperature: num(pairs, "init_temperature")?.unwrap_or(0.1),
            env,
            output: pairs.get("output").map_or_else(|| PathBuf::from("runs"), PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn mode(&self) -> Mode {
        self.setting.mode()
    }

    /// Checks the setting invariants. Paper scale pins image size, batch and
    /// cycle to the setting; desk scale pins them to the desk preset except
    /// that the sync cycle may be anything from the paper's cycle upwards.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let name = self.setting.name();
        if self.seeds.is_empty() {
            return Err(cfg_err("seeds list is empty"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(cfg_err("seeds list has duplicates"));
        }
        if self.episode_ms != 6000 {
            return Err(cfg_err(format!("{name}: episodes last 6000 ms, not {}", self.episode_ms)));
        }
        let (pw, ph, pb, pc) = self.setting.paper_geometry();
        match self.scale {
            Scale::Paper => {
                if (self.width, self.height) != (pw, ph) {
                    return Err(cfg_err(format!(
                        "{name}: images are {pw}x{ph}, not {}x{}",
                        self.width, self.height
                    )));
                }
                if self.batch_size != pb {
                    return Err(cfg_err(format!("{name}: batch size is {pb}, not {}", self.batch_size)));
                }
                if self.cycle_ms != pc {
                    return Err(cfg_err(format!("{name}: action cycle is {pc} ms, not {}", self.cycle_ms)));
                }
                if self.reset_ms != 4000 {
                    return Err(cfg_err(format!("{name}: resets last 4000 ms, not {}", self.reset_ms)));
                }
                if self.training_minutes != 72.0 {
                    return Err(cfg_err(format!(
                        "{name}: training time is 72 minutes, not {}",
                        self.training_minutes
                    )));
                }
            }
            Scale::Desk => {
                let (dw, dh, _, dc) = self.setting.desk_geometry();
                if (self.width, self.height) != (dw, dh) {
                    return Err(cfg_err(format!(
                        "{name} (desk): images are {dw}x{dh}, not {}x{}",
                        self.width, self.height
                    )));
                }
                if self.batch_size == 0 || self.batch_size > pb {
                    return Err(cfg_err(format!("{name} (desk): batch size must lie in [1, {pb}]")));
                }
                let cycle_ok = match self.mode() {
                    Mode::Async => self.cycle_ms == dc,
                    Mode::Sync => self.cycle_ms >= pc,
                };
                if !cycle_ok {
                    return Err(cfg_err(format!(
                        "{name} (desk): action cycle {} ms is not allowed",
                        self.cycle_ms
                    )));
                }
                if !(self.training_minutes > 0.0) {
                    return Err(cfg_err("training time must be positive"));
                }
            }
        }
        let horizon = horizon_steps(self.episode_ms, self.cycle_ms).map_err(|e| cfg_err(e.to_string()))?;
        if !self.total_steps().is_multiple_of(horizon) {
            return Err(cfg_err(format!(
                "{name}: {} minutes at {} ms is not a whole number of episodes",
                self.training_minutes, self.cycle_ms
            )));
        }
        if self.total_steps() == 0 {
            return Err(cfg_err("training time shorter than one episode"));
        }
        if self.hidden == 0 || !(self.lr > 0.0) || !(self.init_temperature > 0.0) {
            return Err(cfg_err("hidden, lr and init_temperature must be positive"));
        }
        if self.clock == ClockMode::Virtual
            && self.mode() == Mode::Async
            && self.delays.sample + self.delays.grad == 0
        {
            return Err(cfg_err("virtual async runs need delay_sample or delay_grad above zero"));
        }
        self.env_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.pipeline_config(0).validate().map_err(|e| cfg_err(e.to_string()))?;
        self.architecture().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.hyper().validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(())
    }

    /// Interaction steps in the training time, resets excluded.
    pub fn total_steps(&self) -> u64 {
        (self.training_minutes * 60_000.0 / self.cycle_ms as f64).round() as u64
    }

    pub fn horizon(&self) -> u64 {
        self.episode_ms / self.cycle_ms
    }

    pub fn episodes(&self) -> u64 {
        self.total_steps() / self.horizon()
    }

    pub fn init_steps(&self) -> u64 {
        self.init_steps.unwrap_or_else(|| init_steps_for(self.total_steps()))
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            width: self.width,
            height: self.height,
            cycle_ms: self.cycle_ms,
            episode_ms: self.episode_ms,
            reset_ms: self.reset_ms,
            ..self.env.clone()
        }
    }

    pub fn pipeline_config(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            mode: self.mode(),
            cycle_ms: self.cycle_ms,
            episodes: self.episodes(),
            init_steps: self.init_steps(),
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity.unwrap_or(self.total_steps().max(1) as usize),
            channel_capacity: self.channel_capacity,
            delays: self.delays,
            sampler_lag: self.sampler_lag,
            seed,
            ..PipelineConfig::default()
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            feature_dim: self.feature_dim,
            hidden: vec![self.hidden; 2],
            ..Architecture::standard(self.width, self.height)
        }
    }

    pub fn hyper(&self) -> SacHyper {
        SacHyper {
            lr_actor: self.lr,
            lr_critic: self.lr,
            lr_alpha: self.lr,
            batch_size: self.batch_size,
            init_temperature: self.init_temperature,
            ..SacHyper::default()
        }
    }
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let mut pairs = parse_pairs(&text)?;
    for o in overrides {
        apply_override(&mut pairs, o)?;
    }
    ExperimentConfig::from_pairs(&pairs)
}
