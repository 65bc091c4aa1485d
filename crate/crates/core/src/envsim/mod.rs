//! Simulated visual reacher.
//!
//! A camera rides on a seven-joint arm whose joint-velocity commands are mapped
//! to Cartesian camera velocity by a fixed 3x7 matrix. The camera looks
//! straight down at a red target on the table; the reward is the fraction of
//! red pixels scaled by the action cycle time. Reset and step are paced by the
//! attached clock, so the world keeps moving while the agent computes.

mod ppm;
mod render;
mod reward;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock::{ClockError, WorkerClock};
use crate::types::{
    horizon_steps, Action, Frame, InitialStateDist, Millis, Observation, JOINTS, STACK,
};

pub use ppm::{read_ppm, write_ppm};
pub use render::{
    render, ArmState, CameraModel, Projection, TargetSpec, BACKGROUND, TARGET_RED, WORKSPACE_CM,
};
pub use reward::{compute_mask, compute_reward, Mask, RedThreshold, RewardParams};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment configuration error: {0}")]
    Config(String),
    #[error("episode is over after {0} steps; reset first")]
    EpisodeOver(u64),
    #[error("no episode in progress; reset first")]
    NotReset,
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Default Cartesian coupling: each of the first three joints drives one axis,
/// the remaining four add small cross terms. Full row rank.
pub const DEFAULT_KINEMATICS: [[f64; JOINTS]; 3] = [
    [1.0, 0.0, 0.0, 0.25, 0.0, -0.25, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.25, 0.0, -0.25],
    [0.0, 0.0, 1.0, -0.25, 0.25, 0.0, 0.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub cycle_ms: Millis,
    pub episode_ms: Millis,
    pub reset_ms: Millis,
    pub kinematics: [[f64; JOINTS]; 3],
    /// Cartesian speed, cm/s, produced by a unit entry of `kinematics * action`.
    pub velocity_scale_cm_s: f64,
    /// Joint speed, rad/s, of a unit normalized command.
    pub joint_speed_rad_s: f64,
    pub joint_limit_rad: f64,
    pub threshold: RedThreshold,
    pub noise: bool,
    pub focal_scale: f64,
    pub target_radius_cm: f64,
    /// Distance from the bottom face of the box down to the table.
    pub table_gap_cm: f64,
    pub d0: InitialStateDist,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 90,
            cycle_ms: 40,
            episode_ms: 6000,
            reset_ms: 4000,
            kinematics: DEFAULT_KINEMATICS,
            velocity_scale_cm_s: 10.0,
            joint_speed_rad_s: 1.0,
            joint_limit_rad: 2.9,
            threshold: RedThreshold::default(),
            noise: false,
            focal_scale: 0.5,
            target_radius_cm: 4.0,
            table_gap_cm: 4.0,
            d0: InitialStateDist {
                start_camera_cm: [20.0, 30.0, 30.0],
                target_x_cm: (8.0, 32.0),
                target_y_cm: (10.0, 50.0),
            },
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive");
        }
        if self.cycle_ms == 0 || self.episode_ms < self.cycle_ms {
            return bad("cycle must be positive and no longer than an episode");
        }
        if !(self.velocity_scale_cm_s > 0.0 && self.focal_scale > 0.0 && self.target_radius_cm > 0.0)
        {
            return bad("velocity scale, focal scale and target radius must be positive");
        }
        if self.table_gap_cm <= 0.0 {
            return bad("table must lie below the workspace box");
        }
        if self.kinematics.iter().flatten().any(|k| !k.is_finite()) || rank3(&self.kinematics) < 3
        {
            return bad("kinematic map must be finite and full rank");
        }
        let s = self.d0.start_camera_cm;
        if (0..3).any(|i| !(0.0..=WORKSPACE_CM[i]).contains(&s[i])) {
            return bad("start pose outside the workspace box");
        }
        Ok(())
    }

    pub fn horizon(&self) -> u64 {
        horizon_steps(self.episode_ms, self.cycle_ms).unwrap_or(0)
    }

    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            alpha: 0.25,
            delta_t_ms: self.cycle_ms as f64,
            height: self.height,
            width: self.width,
            threshold: self.threshold,
        }
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel {
            focal_scale: self.focal_scale,
        }
    }

    /// Camera displacement, cm, produced by holding `action` for one cycle.
    pub fn displacement(&self, action: &Action) -> [f64; 3] {
        let dt = self.cycle_ms as f64 / 1000.0;
        let mut out = [0.0; 3];
        for (axis, row) in self.kinematics.iter().enumerate() {
            let v: f64 = row.iter().zip(action.values()).map(|(k, a)| k * a).sum();
            out[axis] = self.velocity_scale_cm_s * v * dt;
        }
        out
    }
}

fn rank3(k: &[[f64; JOINTS]; 3]) -> usize {
    // Largest 3x3 minor decides whether the map is onto R^3.
    let mut best = 0.0f64;
    for a in 0..JOINTS {
        for b in a + 1..JOINTS {
            for c in b + 1..JOINTS {
                let m = |r: usize, j: usize| k[r][j];
                let det = m(0, a) * (m(1, b) * m(2, c) - m(1, c) * m(2, b))
                    - m(0, b) * (m(1, a) * m(2, c) - m(1, c) * m(2, a))
                    + m(0, c) * (m(1, a) * m(2, b) - m(1, b) * m(2, a));
                best = best.max(det.abs());
            }
        }
    }
    if best > 1e-9 {
        3
    } else {
        2
    }
}

/// The environment. Exactly one worker may drive it.
pub struct VisualReacher {
    config: EnvConfig,
    rewards: RewardParams,
    rng: ChaCha8Rng,
    clock: Option<WorkerClock>,
    arm: ArmState,
    target: TargetSpec,
    stack: Option<[Arc<Frame>; STACK]>,
    last_action: Action,
    steps: u64,
    horizon: u64,
}

impl VisualReacher {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let rewards = config.reward_params();
        let horizon = config.horizon();
        let arm = Self::start_pose(&config);
        Ok(Self {
            target: TargetSpec {
                position: [0.0, 0.0, -config.table_gap_cm],
                radius_cm: config.target_radius_cm,
            },
            config,
            rewards,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: None,
            arm,
            stack: None,
            last_action: Action::ZERO,
            steps: 0,
            horizon,
        })
    }

    /// Paces resets against `clock`.
    pub fn with_clock(mut self, clock: WorkerClock) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn attach_clock(&mut self, clock: WorkerClock) {
        self.clock = Some(clock);
    }

    fn start_pose(config: &EnvConfig) -> ArmState {
        ArmState {
            joint_positions: [0.0; JOINTS],
            joint_velocities: [0.0; JOINTS],
            camera_position: config.d0.start_camera_cm,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn arm(&self) -> &ArmState {
        &self.arm
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Returns the arm to the start pose, places a new target and waits out
    /// the reset duration. The image stack holds three copies of the first
    /// frame.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.arm = Self::start_pose(&self.config);
        let (x0, x1) = self.config.d0.target_x_cm;
        let (y0, y1) = self.config.d0.target_y_cm;
        self.target = TargetSpec {
            position: [
                self.rng.random_range(x0..x1),
                self.rng.random_range(y0..y1),
                -self.config.table_gap_cm,
            ],
            radius_cm: self.config.target_radius_cm,
        };
        self.last_action = Action::ZERO;
        self.steps = 0;
        if let Some(clock) = &self.clock {
            clock.spend(self.config.reset_ms)?;
        }
        let frame = Arc::new(self.render_current());
        self.stack = Some([frame.clone(), frame.clone(), frame]);
        Ok(self.observation())
    }

    /// Applies `action` for one action cycle and returns the new observation
    /// with the reward computed on the newest frame.
    pub fn step(&mut self, action: &Action) -> Result<(Observation, f64), EnvError> {
        if self.stack.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.steps >= self.horizon {
            return Err(EnvError::EpisodeOver(self.steps));
        }
        let dt = self.config.cycle_ms as f64 / 1000.0;
        let d = self.config.displacement(action);
        for axis in 0..3 {
            self.arm.camera_position[axis] =
                (self.arm.camera_position[axis] + d[axis]).clamp(0.0, WORKSPACE_CM[axis]);
        }
        let lim = self.config.joint_limit_rad;
        for j in 0..JOINTS {
            let v = action.values()[j] * self.config.joint_speed_rad_s;
            self.arm.joint_velocities[j] = v;
            self.arm.joint_positions[j] = (self.arm.joint_positions[j] + v * dt).clamp(-lim, lim);
        }
        self.last_action = *action;
        let frame = Arc::new(self.render_current());
        let reward = compute_reward(&compute_mask(&frame, &self.rewards)?, &self.rewards);
        let stack = self.stack.as_ref().expect("checked above");
        self.stack = Some([stack[1].clone(), stack[2].clone(), frame]);
        self.steps += 1;
        Ok((self.observation(), reward))
    }

    pub fn is_episode_over(&self) -> bool {
        self.steps >= self.horizon
    }

    /// Newest frame of the current stack.
    pub fn latest_frame(&self) -> Option<&Frame> {
        self.stack.as_ref().map(|s| s[STACK - 1].as_ref())
    }

    fn render_current(&mut self) -> Frame {
        let mut frame = render(
            &self.arm,
            &self.target,
            &self.config.camera(),
            self.config.height,
            self.config.width,
        );
        if self.config.noise {
            for p in frame.pixels_mut() {
                let n: i16 = self.rng.random_range(-8..=8);
                *p = (*p as i16 + n).clamp(0, 255) as u8;
            }
        }
        frame
    }

    fn observation(&self) -> Observation {
        Observation {
            joint_positions: self.arm.joint_positions,
            joint_velocities: self.arm.joint_velocities,
            last_action: *self.last_action.values(),
            image_stack: self.stack.clone().expect("observation before reset"),
        }
    }
}
