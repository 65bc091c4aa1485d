//! Colour-threshold mask and the cycle-time-scaled pixel-fraction reward.

use crate::types::Frame;

use super::EnvError;

/// Channel thresholds for "this pixel is the red target".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RedThreshold {
    pub red_min: u8,
    pub other_max: u8,
}

impl Default for RedThreshold {
    fn default() -> Self {
        Self {
            red_min: 200,
            other_max: 80,
        }
    }
}

impl RedThreshold {
    #[inline]
    pub fn passes(&self, px: [u8; 3]) -> bool {
        px[0] >= self.red_min && px[1] <= self.other_max && px[2] <= self.other_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    /// Reward scale, 0.25 for every setting.
    pub alpha: f64,
    /// Action cycle time in ms.
    pub delta_t_ms: f64,
    pub height: usize,
    pub width: usize,
    pub threshold: RedThreshold,
}

impl RewardParams {
    pub fn new(delta_t_ms: f64, height: usize, width: usize) -> Self {
        Self {
            alpha: 0.25,
            delta_t_ms,
            height,
            width,
            threshold: RedThreshold::default(),
        }
    }

    /// Upper bound of a single step's reward.
    pub fn max_reward(&self) -> f64 {
        self.alpha * self.delta_t_ms
    }
}

/// 0-1 matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn ones(&self) -> usize {
        self.data.iter().map(|&m| m as usize).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }
}

pub fn compute_mask(frame: &Frame, params: &RewardParams) -> Result<Mask, EnvError> {
    if frame.height() != params.height || frame.width() != params.width {
        return Err(EnvError::Config(format!(
            "frame is {}x{}, reward expects {}x{}",
            frame.width(),
            frame.height(),
            params.width,
            params.height
        )));
    }
    let data = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| params.threshold.passes([p[0], p[1], p[2]]) as u8)
        .collect();
    Ok(Mask {
        height: params.height,
        width: params.width,
        data,
    })
}

/// `alpha * delta_t * (sum of mask) / (h * w)`; lies in `[0, alpha * delta_t]`.
pub fn compute_reward(mask: &Mask, params: &RewardParams) -> f64 {
    debug_assert_eq!((mask.height, mask.width), (params.height, params.width));
    let fraction = mask.ones() as f64 / (params.height * params.width) as f64;
    params.alpha * params.delta_t_ms * fraction
}
