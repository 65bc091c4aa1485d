//! Image encoder, twin Q heads and the tanh-Gaussian policy head.
//!
//! Parameter names are prefixed by role: `enc.` (shared encoder), `q1.` and
//! `q2.` (critics), `pi.` (policy). Images enter as `[9, B, H, W]` with the
//! three stacked RGB frames as channels, scaled to `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::{Observation, JOINTS, PROPRIO_DIM, STACK};

use super::graph::{Graph, Var};
use super::params::{Bound, ParamSet};
use super::tensor::{Real, Tensor};
use super::NnError;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub image_width: usize,
    pub image_height: usize,
    pub conv: Vec<ConvSpec>,
    /// Width of the tanh projection after the conv stack; 0 feeds the
    /// flattened conv output straight into the trunks.
    pub feature_dim: usize,
    /// Hidden layer widths of every trunk.
    pub hidden: Vec<usize>,
}

impl Architecture {
    /// Two 3x3 stride-2 convs (8 and 16 channels), a 50-wide projection and
    /// 2x128 trunks.
    pub fn standard(image_width: usize, image_height: usize) -> Self {
        Self {
            image_width,
            image_height,
            conv: vec![
                ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    channels: 16,
                    kernel: 3,
                    stride: 2,
                },
            ],
            feature_dim: 50,
            hidden: vec![128, 128],
        }
    }

    pub fn in_channels(&self) -> usize {
        3 * STACK
    }

    /// `(channels, height, width)` after the conv stack.
    pub fn conv_output(&self) -> Result<(usize, usize, usize), NnError> {
        let (mut c, mut h, mut w) = (self.in_channels(), self.image_height, self.image_width);
        for (i, l) in self.conv.iter().enumerate() {
            if l.kernel == 0 || l.stride == 0 || l.channels == 0 {
                return Err(NnError::Config(format!("conv layer {i} has a zero size")));
            }
            if h < l.kernel || w < l.kernel {
                return Err(NnError::Config(format!(
                    "conv layer {i}: {w}x{h} input is smaller than kernel {}",
                    l.kernel
                )));
            }
            h = (h - l.kernel) / l.stride + 1;
            w = (w - l.kernel) / l.stride + 1;
            c = l.channels;
        }
        Ok((c, h, w))
    }

    pub fn flat_dim(&self) -> Result<usize, NnError> {
        let (c, h, w) = self.conv_output()?;
        Ok(c * h * w)
    }

    pub fn encoder_dim(&self) -> Result<usize, NnError> {
        if self.feature_dim > 0 {
            Ok(self.feature_dim)
        } else {
            self.flat_dim()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(NnError::Config("image dimensions must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(NnError::Config("hidden widths must be positive".into()));
        }
        self.conv_output().map(|_| ())
    }

    fn trunk_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }

    /// Deterministic fan-in-uniform initialization.
    pub fn init<T: Real>(&self, seed: u64) -> Result<ParamSet<T>, NnError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let mut c = self.in_channels();
        for (i, l) in self.conv.iter().enumerate() {
            p.add_conv(&mut rng, &format!("enc.c{i}"), c, l.channels, l.kernel)?;
            c = l.channels;
        }
        if self.feature_dim > 0 {
            p.add_linear(&mut rng, "enc.proj", self.flat_dim()?, self.feature_dim)?;
        }
        let feat = self.encoder_dim()?;
        for q in ["q1", "q2"] {
            let sizes = self.trunk_sizes(feat + PROPRIO_DIM + JOINTS, 1);
            for (i, w) in sizes.windows(2).enumerate() {
                p.add_linear(&mut rng, &format!("{q}.l{i}"), w[0], w[1])?;
            }
        }
        let sizes = self.trunk_sizes(feat + PROPRIO_DIM, 2 * JOINTS);
        for (i, w) in sizes.windows(2).enumerate() {
            p.add_linear(&mut rng, &format!("pi.l{i}"), w[0], w[1])?;
        }
        Ok(p)
    }

    /// Image features `[B, encoder_dim]`.
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &Bound, images: Var) -> Result<Var, NnError> {
        let s = g.value(images).shape();
        if s.len() != 4 || s[0] != self.in_channels() || s[2] != self.image_height || s[3] != self.image_width {
            return Err(NnError::Config(format!(
                "image batch {s:?} does not match {}x{} with {} channels",
                self.image_width,
                self.image_height,
                self.in_channels()
            )));
        }
        let mut x = images;
        for (i, l) in self.conv.iter().enumerate() {
            x = g.conv2d(x, p.var(&format!("enc.c{i}.w")), p.var(&format!("enc.c{i}.b")), l.stride)?;
            x = g.relu(x);
        }
        let mut f = g.flatten_cbhw(x)?;
        if self.feature_dim > 0 {
            f = g.linear(f, p.var("enc.proj.w"), p.var("enc.proj.b"))?;
            f = g.tanh(f);
        }
        Ok(f)
    }

    /// `Q(s, a)` as `[B, 1]` for trunk `prefix` (`q1` or `q2`).
    pub fn q_value<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        prefix: &str,
        features: Var,
        proprio: Var,
        action: Var,
    ) -> Result<Var, NnError> {
        let x = g.concat(&[features, proprio, action])?;
        mlp(g, p, prefix, x, self.hidden.len() + 1)
    }

    /// Policy mean and clamped log standard deviation, each `[B, 7]`.
    pub fn policy<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        features: Var,
        proprio: Var,
    ) -> Result<(Var, Var), NnError> {
        let x = g.concat(&[features, proprio])?;
        let out = mlp(g, p, "pi", x, self.hidden.len() + 1)?;
        let mean = g.slice_cols(out, 0, JOINTS)?;
        let raw = g.slice_cols(out, JOINTS, 2 * JOINTS)?;
        let log_std = g.clamp(raw, T::c(LOG_STD_MIN), T::c(LOG_STD_MAX));
        Ok((mean, log_std))
    }
}

/// `layers` dense layers `prefix.l0 ..`, rectified between, linear output.
pub fn mlp<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, input: Var, layers: usize) -> Result<Var, NnError> {
    let mut x = input;
    for i in 0..layers {
        x = g.linear(x, p.var(&format!("{prefix}.l{i}.w")), p.var(&format!("{prefix}.l{i}.b")))?;
        if i + 1 < layers {
            x = g.relu(x);
        }
    }
    Ok(x)
}

/// Stacks observation images into `[9, B, H, W]` scaled to `[0, 1]`.
pub fn image_batch<T: Real>(obs: &[&Observation]) -> Result<Tensor<T>, NnError> {
    let first = obs.first().ok_or_else(|| NnError::Shape("empty observation batch".into()))?;
    let (h, w) = first.image_dims();
    let b = obs.len();
    let plane = h * w;
    let mut data = vec![T::zero(); 3 * STACK * b * plane];
    let scale = T::c(1.0 / 255.0);
    for (bi, o) in obs.iter().enumerate() {
        if o.image_dims() != (h, w) {
            return Err(NnError::Shape("observations with mixed image sizes".into()));
        }
        for (f, frame) in o.image_stack.iter().enumerate() {
            let px = frame.pixels();
            for ch in 0..3 {
                let c = f * 3 + ch;
                let dst = &mut data[(c * b + bi) * plane..][..plane];
                for (d, s) in dst.iter_mut().zip(px[ch..].iter().step_by(3)) {
                    *d = T::c(*s as f64) * scale;
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[3 * STACK, b, h, w], data))
}

pub fn proprio_batch<T: Real>(obs: &[&Observation]) -> Tensor<T> {
    let data = obs.iter().flat_map(|o| o.proprio()).map(T::c).collect();
    Tensor::from_vec(&[obs.len(), PROPRIO_DIM], data)
}

pub fn action_batch<T: Real>(actions: &[[f64; JOINTS]]) -> Tensor<T> {
    let data = actions.iter().flatten().map(|&v| T::c(v)).collect();
    Tensor::from_vec(&[actions.len(), JOINTS], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Frame;
    use std::sync::Arc;

    fn tiny() -> Architecture {
        Architecture {
            image_width: 12,
            image_height: 9,
            conv: vec![ConvSpec {
                channels: 2,
                kernel: 3,
                stride: 2,
            }],
            feature_dim: 4,
            hidden: vec![5],
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = tiny();
        let p1: ParamSet<f64> = a.init(1).unwrap();
        assert_eq!(p1, a.init(1).unwrap());
        assert_ne!(p1, a.init(2).unwrap());
    }

    #[test]
    fn every_weight_within_fan_in_bound() {
        let a = Architecture::standard(40, 24);
        let p: ParamSet<f32> = a.init(3).unwrap();
        for (name, t) in p.iter() {
            let fan_in: usize = t.shape()[1..].iter().product::<usize>().max(1);
            if name.ends_with(".w") {
                let bound = 1.0 / (fan_in as f32).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn standard_desk_geometry() {
        let a = Architecture::standard(40, 24);
        assert_eq!(a.conv_output().unwrap(), (16, 5, 9));
        assert!(Architecture::standard(4, 4).validate().is_err());
    }

    #[test]
    fn two_two_one_mlp_by_hand() {
        let mut p = ParamSet::<f64>::new();
        p.insert("m.l0.w", Tensor::from_f64(&[2, 2], &[1.0, -2.0, 0.5, 3.0])).unwrap();
        p.insert("m.l0.b", Tensor::from_f64(&[2], &[0.1, -0.2])).unwrap();
        p.insert("m.l1.w", Tensor::from_f64(&[1, 2], &[2.0, -1.0])).unwrap();
        p.insert("m.l1.b", Tensor::from_f64(&[1], &[0.3])).unwrap();
        let mut g = Graph::new();
        let b = p.bind_const(&mut g);
        let x = g.input(Tensor::from_f64(&[1, 2], &[0.7, 0.2]));
        let y = mlp(&mut g, &b, "m", x, 2).unwrap();
        // h = relu([0.7 - 0.4 + 0.1, 0.35 + 0.6 - 0.2]) = [0.4, 0.75]
        let expected = 2.0 * 0.4 - 0.75 + 0.3;
        assert!((g.scalar(y) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let a = tiny();
        let p = a.init::<f64>(0).unwrap().zeros_like();
        let obs = Observation {
            joint_positions: [0.3; JOINTS],
            joint_velocities: [0.1; JOINTS],
            last_action: [0.5; JOINTS],
            image_stack: std::array::from_fn(|_| Arc::new(Frame::filled(12, 9, [200, 10, 10]))),
        };
        let mut g = Graph::new();
        let b = p.bind_const(&mut g);
        let img = g.input(image_batch(&[&obs]).unwrap());
        let pr = g.input(proprio_batch(&[&obs]));
        let f = a.encode(&mut g, &b, img).unwrap();
        let (mean, log_std) = a.policy(&mut g, &b, f, pr).unwrap();
        assert!(g.value(mean).data().iter().all(|&v| v == 0.0));
        assert!(g.value(log_std).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn image_batch_layout() {
        let mut fr = Frame::filled(2, 1, [0, 0, 0]);
        fr.set_pixel(0, 1, [255, 51, 0]);
        let blank = Arc::new(Frame::filled(2, 1, [0, 0, 0]));
        let obs = Observation {
            joint_positions: [0.0; JOINTS],
            joint_velocities: [0.0; JOINTS],
            last_action: [0.0; JOINTS],
            image_stack: [blank.clone(), blank, Arc::new(fr)],
        };
        let t = image_batch::<f64>(&[&obs, &obs]).unwrap();
        assert_eq!(t.shape(), &[9, 2, 1, 2]);
        // Channel 6 is the red plane of the newest frame.
        let c6 = &t.data()[6 * 4..7 * 4];
        assert_eq!(c6, &[0.0, 1.0, 0.0, 1.0]);
        let c7 = &t.data()[7 * 4..8 * 4];
        assert!((c7[1] - 0.2).abs() < 1e-12);
    }
}
