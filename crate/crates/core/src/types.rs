//! Domain types shared by every stage of the pipeline.

use std::sync::Arc;

use thiserror::Error;

/// Degrees of freedom of the arm, and therefore the action dimension.
pub const JOINTS: usize = 7;

/// Number of frames in an observation's image stack.
pub const STACK: usize = 3;

/// Length of the proprioceptive part of an observation.
pub const PROPRIO_DIM: usize = 3 * JOINTS;

/// Milliseconds. Every duration and timestamp in the crate uses this unit.
pub type Millis = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("action component {index} is not finite ({value})")]
    NonFiniteAction { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One RGB frame, row-major, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DomainError> {
        if pixels.len() != width * height * 3 {
            return Err(DomainError::InvalidConfig(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// The state the agent sees: proprioception plus the last three camera frames.
///
/// Frames are shared through `Arc` so that consecutive observations (and the
/// transitions holding them) do not duplicate image memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub joint_positions: [f64; JOINTS],
    pub joint_velocities: [f64; JOINTS],
    pub last_action: [f64; JOINTS],
    /// Oldest frame first.
    pub image_stack: [Arc<Frame>; STACK],
}

impl Observation {
    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_stack[0].height(), self.image_stack[0].width())
    }

    /// Joint positions, joint velocities and last action, concatenated.
    pub fn proprio(&self) -> [f64; PROPRIO_DIM] {
        let mut out = [0.0; PROPRIO_DIM];
        out[..JOINTS].copy_from_slice(&self.joint_positions);
        out[JOINTS..2 * JOINTS].copy_from_slice(&self.joint_velocities);
        out[2 * JOINTS..].copy_from_slice(&self.last_action);
        out
    }

    /// Checks the structural invariants: identical frame sizes, finite vectors,
    /// last action inside the unit box.
    pub fn is_well_formed(&self) -> bool {
        let (h, w) = self.image_dims();
        self.image_stack
            .iter()
            .all(|f| f.height() == h && f.width() == w)
            && self
                .joint_positions
                .iter()
                .chain(&self.joint_velocities)
                .all(|v| v.is_finite())
            && self
                .last_action
                .iter()
                .all(|a| a.is_finite() && (-1.0..=1.0).contains(a))
    }
}

/// Normalized joint-velocity command; every component lies in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action([f64; JOINTS]);

impl Action {
    pub const ZERO: Action = Action([0.0; JOINTS]);

    pub fn values(&self) -> &[f64; JOINTS] {
        &self.0
    }
}

/// Clamps each component into [-1, 1]. Rejects NaN and infinities.
pub fn clamp_action(raw: &[f64; JOINTS]) -> Result<Action, DomainError> {
    let mut out = [0.0; JOINTS];
    for (index, (&value, slot)) in raw.iter().zip(out.iter_mut()).enumerate() {
        if !value.is_finite() {
            return Err(DomainError::NonFiniteAction { index, value });
        }
        *slot = value.clamp(-1.0, 1.0);
    }
    Ok(Action(out))
}

/// The unit stored in the replay buffer.
///
/// `terminal` marks the last step of an episode. Episodes end on a time limit,
/// so learners must keep bootstrapping across it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// Number of whole action cycles that fit into an episode.
pub fn horizon_steps(episode_ms: Millis, cycle_ms: Millis) -> Result<u64, DomainError> {
    if cycle_ms == 0 {
        return Err(DomainError::InvalidConfig(
            "action cycle time must be positive".into(),
        ));
    }
    if episode_ms == 0 {
        return Err(DomainError::InvalidConfig(
            "episode duration must be positive".into(),
        ));
    }
    Ok(episode_ms / cycle_ms)
}

/// Replay-buffer initialization steps for a run of `total_steps`.
///
/// Keeps the fixed ratio 5000 : 108000 with truncation, which yields 2666 for
/// 57600 steps and 2500 for 54000 steps.
pub fn init_steps_for(total_steps: u64) -> u64 {
    total_steps * 5000 / 108_000
}

/// Fixed arm start pose plus a uniform target placement rectangle on the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStateDist {
    pub start_camera_cm: [f64; 3],
    pub target_x_cm: (f64, f64),
    pub target_y_cm: (f64, f64),
}

/// The finite-horizon MDP parameters that are not realized by the simulator
/// dynamics themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpSpec {
    pub gamma: f64,
    pub d0: InitialStateDist,
    pub horizon_steps: u64,
}

impl MdpSpec {
    pub fn new(
        gamma: f64,
        d0: InitialStateDist,
        episode_ms: Millis,
        cycle_ms: Millis,
    ) -> Result<Self, DomainError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(DomainError::InvalidConfig(format!(
                "discount {gamma} outside [0, 1)"
            )));
        }
        let horizon_steps = horizon_steps(episode_ms, cycle_ms)?;
        if horizon_steps == 0 {
            return Err(DomainError::InvalidConfig(
                "episode shorter than one action cycle".into(),
            ));
        }
        Ok(Self {
            gamma,
            d0,
            horizon_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_identity_and_saturation() {
        assert_eq!(clamp_action(&[0.0; 7]).unwrap(), Action::ZERO);
        let a = clamp_action(&[2.0, -3.0, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.values(), &[1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn clamp_rejects_non_finite() {
        let err = clamp_action(&[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, DomainError::NonFiniteAction { index: 1, .. }));
        assert!(clamp_action(&[f64::INFINITY; 7]).is_err());
    }

    #[test]
    fn horizon_matches_settings() {
        assert_eq!(horizon_steps(6000, 40).unwrap(), 150);
        assert_eq!(horizon_steps(6000, 75).unwrap(), 80);
        assert_eq!(horizon_steps(6000, 80).unwrap(), 75);
        assert!(horizon_steps(6000, 0).is_err());
    }

    #[test]
    fn init_steps_ratio() {
        assert_eq!(init_steps_for(108_000), 5000);
        assert_eq!(init_steps_for(57_600), 2666);
        assert_eq!(init_steps_for(54_000), 2500);
    }

    #[test]
    fn mdp_rejects_bad_discount() {
        let d0 = InitialStateDist {
            start_camera_cm: [20.0, 30.0, 30.0],
            target_x_cm: (8.0, 32.0),
            target_y_cm: (10.0, 50.0),
        };
        assert!(MdpSpec::new(1.0, d0, 6000, 40).is_err());
        assert_eq!(MdpSpec::new(0.99, d0, 6000, 40).unwrap().horizon_steps, 150);
    }

    proptest! {
        #[test]
        fn clamp_matches_loop_oracle(raw in proptest::array::uniform7(-5.0f64..5.0)) {
            let a = clamp_action(&raw).unwrap();
            for i in 0..JOINTS {
                let mut expected = raw[i];
                if expected > 1.0 { expected = 1.0; }
                if expected < -1.0 { expected = -1.0; }
                prop_assert_eq!(a.values()[i], expected);
            }
            // idempotent
            prop_assert_eq!(clamp_action(a.values()).unwrap(), a);
        }

        #[test]
        fn clamp_preserves_order(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let a = clamp_action(&[x; 7]).unwrap().values()[0];
            let b = clamp_action(&[y; 7]).unwrap().values()[0];
            if x <= y { prop_assert!(a <= b); }
        }

        #[test]
        fn horizon_brackets_episode(e in 1u64..100_000, c in 1u64..10_000) {
            let n = horizon_steps(e, c).unwrap();
            prop_assert!(n * c <= e);
            prop_assert!(e < (n + 1) * c);
        }
    }
}
