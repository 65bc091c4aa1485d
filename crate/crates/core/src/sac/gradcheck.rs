//! Central finite-difference checks of the three SAC objectives in 64-bit
//! mode on small randomized networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{Architecture, ConvSpec, Graph, ParamSet, Tensor};
use crate::types::{JOINTS, PROPRIO_DIM};

use super::loss;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub critic_max_rel_err: f64,
    pub actor_max_rel_err: f64,
    pub temperature_max_rel_err: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.critic_max_rel_err.max(self.actor_max_rel_err).max(self.temperature_max_rel_err)
    }
}

/// The network shape used for checking: one conv, a projection and one
/// hidden layer per trunk.
pub fn small_arch() -> Architecture {
    Architecture {
        image_width: 7,
        image_height: 5,
        conv: vec![ConvSpec {
            channels: 2,
            kernel: 3,
            stride: 2,
        }],
        feature_dim: 3,
        hidden: vec![6],
    }
}

/// `|a - f| / max(|a|, |f|, 1e-6)` maximized over coordinates.
pub fn max_rel_err(analytic: &ParamSet<f64>, params: &ParamSet<f64>, eval: impl Fn(&ParamSet<f64>) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        let a = analytic.get(name).expect("gradient for every parameter");
        for i in 0..t.len() {
            let orig = t.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + FD_STEP;
            let up = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig - FD_STEP;
            let down = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            let an = a.data()[i];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Runs `trials` independent checks of every objective.
pub fn check_sac_gradients(trials: usize, seed: u64) -> GradCheckReport {
    let arch = small_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        trials,
        ..Default::default()
    };
    for trial in 0..trials {
        let all: ParamSet<f64> = arch.init(seed.wrapping_add(trial as u64)).unwrap();
        let mut critic = all.subset("enc.");
        critic.merge(&all.subset("q")).unwrap();
        let actor = all.subset("pi.");
        let b = 3;
        let images = uniform(&mut rng, &[9, b, arch.image_height, arch.image_width], 0.0, 1.0);
        let proprio = normal(&mut rng, &[b, PROPRIO_DIM], 1.0);
        let actions = uniform(&mut rng, &[b, JOINTS], -1.0, 1.0);
        let y = normal(&mut rng, &[b, 1], 2.0);
        let eps = normal(&mut rng, &[b, JOINTS], 1.0);
        let alpha = rng.random_range(0.05..1.0);

        let critic_eval = |p: &ParamSet<f64>| -> (f64, Option<ParamSet<f64>>, Tensor<f64>) {
            let mut g = Graph::new();
            let bound = p.bind(&mut g);
            let (i, pr, a, yv) = (
                g.input(images.clone()),
                g.input(proprio.clone()),
                g.input(actions.clone()),
                g.input(y.clone()),
            );
            let out = loss::critic_loss(&arch, &mut g, &bound, i, pr, a, yv).unwrap();
            let value = g.scalar(out.loss);
            let feats = g.value(out.features).clone();
            let mut grads = g.backward(out.loss).unwrap();
            (value, Some(bound.grads(p, &mut grads)), feats)
        };
        let (_, grads, features) = critic_eval(&critic);
        let err = max_rel_err(&grads.unwrap(), &critic, |p| critic_eval(p).0);
        report.critic_max_rel_err = report.critic_max_rel_err.max(err);

        let actor_eval = |p: &ParamSet<f64>| -> (f64, ParamSet<f64>, Tensor<f64>) {
            let mut g = Graph::new();
            let bound = p.bind(&mut g);
            let c = critic.bind_const(&mut g);
            let f = g.input(features.clone());
            let pr = g.input(proprio.clone());
            let out = loss::actor_loss(&arch, &mut g, &bound, &c, f, pr, &eps, alpha).unwrap();
            let value = g.scalar(out.loss);
            let lp = g.value(out.log_prob).clone();
            let mut grads = g.backward(out.loss).unwrap();
            (value, bound.grads(p, &mut grads), lp)
        };
        let (_, grads, log_prob) = actor_eval(&actor);
        let err = max_rel_err(&grads, &actor, |p| actor_eval(p).0);
        report.actor_max_rel_err = report.actor_max_rel_err.max(err);

        let mut la = ParamSet::new();
        la.insert("log_alpha", Tensor::from_f64(&[1], &[alpha.ln()])).unwrap();
        let target_entropy = -(JOINTS as f64) + rng.random_range(-3.0..3.0);
        let temp_eval = |p: &ParamSet<f64>| -> (f64, ParamSet<f64>) {
            let mut g = Graph::new();
            let bound = p.bind(&mut g);
            let lp = g.input(log_prob.clone());
            let l = loss::temperature_loss(&mut g, bound.var("log_alpha"), lp, target_entropy).unwrap();
            let value = g.scalar(l);
            let mut grads = g.backward(l).unwrap();
            (value, bound.grads(p, &mut grads))
        };
        let (_, grads) = temp_eval(&la);
        let err = max_rel_err(&grads, &la, |p| temp_eval(p).0);
        report.temperature_max_rel_err = report.temperature_max_rel_err.max(err);
    }
    report
}
