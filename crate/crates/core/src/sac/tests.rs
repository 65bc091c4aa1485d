use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gradcheck::check_sac_gradients;
use super::loss::{self, BatchTensors};
use super::*;
use crate::envsim::{EnvConfig, VisualReacher};
use crate::nn::{Architecture, ConvSpec, Graph, ParamSet, Tensor, WeightSnapshot};
use crate::types::{Transition, JOINTS, PROPRIO_DIM};

/// 3x3 images collapse to one conv feature; trunks have no hidden layer, so
/// every head is affine and easy to pin down.
fn affine_arch() -> Architecture {
    Architecture {
        image_width: 3,
        image_height: 3,
        conv: vec![ConvSpec {
            channels: 1,
            kernel: 3,
            stride: 1,
        }],
        feature_dim: 0,
        hidden: vec![],
    }
}

/// All weights zero; q1/q2 output their biases; policy outputs `mean`
/// and `log_std` everywhere.
fn pinned(q1: f64, q2: f64, mean: f64, log_std: f64) -> ParamSet<f64> {
    let mut p = affine_arch().init::<f64>(0).unwrap().zeros_like();
    p.get_mut("q1.l0.b").unwrap().data_mut()[0] = q1;
    p.get_mut("q2.l0.b").unwrap().data_mut()[0] = q2;
    let b = p.get_mut("pi.l0.b").unwrap().data_mut();
    b[..JOINTS].fill(mean);
    b[JOINTS..].fill(log_std);
    p
}

fn normals(rng: &mut ChaCha8Rng, rows: usize) -> Tensor<f64> {
    Tensor::from_vec(
        &[rows, JOINTS],
        (0..rows * JOINTS).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

fn soft_value_mean(p: &ParamSet<f64>, alpha: f64, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let arch = affine_arch();
    let (mut sum, mut sq) = (0.0, 0.0);
    let chunk = 10_000;
    for _ in 0..n / chunk {
        let mut g = Graph::new();
        let b = p.bind_const(&mut g);
        let img = g.input(Tensor::zeros(&[9, chunk, 3, 3]));
        let pro = g.input(Tensor::zeros(&[chunk, PROPRIO_DIM]));
        let eps = normals(rng, chunk);
        let v = loss::soft_value(&arch, &mut g, &b, &b, &b, img, pro, &eps, alpha).unwrap();
        for &x in g.value(v).data() {
            sum += x;
            sq += x * x;
        }
    }
    let n = (n / chunk * chunk) as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean) / n).sqrt())
}

/// `E[f(u)]` for `u ~ N(m, s^2)` by Simpson's rule over +-12 sigma.
fn gauss_expect(m: f64, s: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 40_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=n {
        let z = lo + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(z) * f(m + s * z);
    }
    acc * h / 3.0
}

/// Expected log-density of a 7-dim tanh-Gaussian with identical marginals.
fn expected_log_prob(m: f64, log_std: f64) -> f64 {
    let s = log_std.exp();
    let gauss = -0.5 - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let jac = gauss_expect(m, s, |u| (1.0 - u.tanh().powi(2)).ln());
    JOINTS as f64 * (gauss - jac)
}

#[test]
fn soft_value_zero_temperature_constant_critic() {
    let p = pinned(4.5, 4.5, 0.2, -10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (m, _) = soft_value_mean(&p, 0.0, 10_000, &mut rng);
    assert!((m - 4.5).abs() < 1e-12);
}

#[test]
fn soft_value_takes_min_of_target_critics() {
    let p = pinned(1.0, 3.0, 0.0, -1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (m, _) = soft_value_mean(&p, 0.0, 10_000, &mut rng);
    assert!((m - 1.0).abs() < 1e-12);
}

#[test]
fn soft_value_matches_monte_carlo_oracle() {
    let (mean, log_std, c, alpha) = (0.3, -0.4, 2.0, 0.2);
    let p = pinned(c, c + 1.0, mean, log_std);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (est, se) = soft_value_mean(&p, alpha, 1_000_000, &mut rng);
    let oracle = c - alpha * expected_log_prob(mean, log_std);
    assert!((est - oracle).abs() < 3.0 * se, "{est} vs {oracle} (se {se})");
}

fn critic_loss_value(q: f64, y: &[f64]) -> f64 {
    let arch = affine_arch();
    let p = pinned(q, q, 0.0, 0.0);
    let n = y.len();
    let mut g = Graph::new();
    let b = p.bind_const(&mut g);
    let img = g.input(Tensor::zeros(&[9, n, 3, 3]));
    let pro = g.input(Tensor::zeros(&[n, PROPRIO_DIM]));
    let act = g.input(Tensor::zeros(&[n, JOINTS]));
    let yv = g.input(Tensor::from_f64(&[n, 1], y));
    let out = loss::critic_loss(&arch, &mut g, &b, img, pro, act, yv).unwrap();
    g.scalar(out.loss)
}

#[test]
fn critic_loss_hand_values() {
    let y = loss::td_target(&Tensor::<f64>::from_f64(&[1, 1], &[1.0]), &Tensor::from_f64(&[1, 1], &[2.0]), 0.9);
    assert!((y.data()[0] - 2.8).abs() < 1e-15);
    // 0.5 * (1 - 2.8)^2 = 1.62 per critic, two critics.
    assert!((critic_loss_value(1.0, &[2.8]) - 2.0 * 1.62).abs() < 1e-12);
    assert_eq!(critic_loss_value(1.5, &[1.5, 1.5]), 0.0);
    let pair = critic_loss_value(0.5, &[2.0, -1.0]);
    let singles = 0.5 * (critic_loss_value(0.5, &[2.0]) + critic_loss_value(0.5, &[-1.0]));
    assert!((pair - singles).abs() < 1e-12);
}

fn actor_loss_mean(p: &ParamSet<f64>, alpha: f64, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let arch = affine_arch();
    let chunk = 10_000;
    // The loss is a batch mean, so the spread of chunk means gives the
    // standard error.
    let means: Vec<f64> = (0..n / chunk)
        .map(|_| {
            let mut g = Graph::new();
            let b = p.bind_const(&mut g);
            let feat = g.input(Tensor::zeros(&[chunk, 1]));
            let pro = g.input(Tensor::zeros(&[chunk, PROPRIO_DIM]));
            let eps = normals(rng, chunk);
            let out = loss::actor_loss(&arch, &mut g, &b, &b, feat, pro, &eps, alpha).unwrap();
            g.scalar(out.loss)
        })
        .collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn actor_loss_is_negative_q_without_entropy() {
    let p = pinned(5.0, 5.0, 0.4, -10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, _) = actor_loss_mean(&p, 0.0, 10_000, &mut rng);
    assert!((m + 5.0).abs() < 1e-12);
}

#[test]
fn actor_loss_falls_as_entropy_rises() {
    let mut prev = f64::INFINITY;
    for log_std in [-2.0, -1.0, 0.0] {
        let p = pinned(0.0, 0.0, 0.0, log_std);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (m, _) = actor_loss_mean(&p, 0.5, 20_000, &mut rng);
        assert!(m < prev);
        prev = m;
    }
}

#[test]
fn actor_loss_matches_gaussian_integral() {
    // Q(s, a) = sum_j w a_j + c, identical in both critics.
    let (mean, log_std, alpha, w, c) = (0.5, -0.7, 0.3, 1.5, 0.25);
    let mut p = pinned(c, c, mean, log_std);
    for q in ["q1", "q2"] {
        let wt = p.get_mut(&format!("{q}.l0.w")).unwrap().data_mut();
        let n = wt.len();
        wt[n - JOINTS..].fill(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (est, se) = actor_loss_mean(&p, alpha, 1_000_000, &mut rng);
    let eq = JOINTS as f64 * w * gauss_expect(mean, log_std.exp(), f64::tanh) + c;
    let oracle = alpha * expected_log_prob(mean, log_std) - eq;
    assert!((est - oracle).abs() < 3.0 * se.max(1e-4), "{est} vs {oracle} (se {se})");
}

#[test]
fn temperature_fixed_point_and_direction() {
    let grad_for = |lp: f64, h: f64| {
        let mut g = Graph::<f64>::new();
        let la = g.param(Tensor::from_f64(&[1], &[0.1f64.ln()]));
        let lpv = g.input(Tensor::from_f64(&[2, 1], &[lp, lp]));
        let l = loss::temperature_loss(&mut g, la, lpv, h).unwrap();
        g.backward(l).unwrap().get(la).unwrap().data()[0]
    };
    assert_eq!(grad_for(7.0, -7.0), 0.0);
    // Entropy -log pi = -(-2) = 2 is below a target of 5: descent raises alpha.
    assert!(grad_for(-2.0, 5.0) < 0.0);
    assert!(grad_for(-9.0, 5.0) > 0.0);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let r = check_sac_gradients(50, 123);
    assert!(r.worst() < 1e-4, "{r:?}");
}

fn env_batch(n: usize, seed: u64) -> Vec<Transition> {
    let cfg = EnvConfig {
        width: 16,
        height: 12,
        ..EnvConfig::default()
    };
    let mut env = VisualReacher::new(cfg, seed).unwrap();
    let mut actor = RandomActor::new(seed);
    let mut obs = env.reset().unwrap();
    (0..n)
        .map(|_| {
            let a = actor.sample();
            let (next, r) = env.step(&a).unwrap();
            let t = Transition {
                obs: obs.clone(),
                action: a,
                reward: r,
                next_obs: next.clone(),
                terminal: false,
            };
            obs = next;
            t
        })
        .collect()
}

fn small_learner(seed: u64) -> SacLearner<f64> {
    let mut arch = Architecture::standard(16, 12);
    arch.hidden = vec![16];
    arch.feature_dim = 8;
    let hyper = SacHyper {
        batch_size: 8,
        ..SacHyper::default()
    };
    SacLearner::new(arch, hyper, seed).unwrap()
}

#[test]
fn update_counts_tracks_target_and_is_deterministic() {
    let batch = env_batch(8, 4);
    let mut a = small_learner(9);
    let mut b = small_learner(9);
    let prev_target = a.target_params().clone();
    let m = a.update(&batch).unwrap();
    assert_eq!(m.update, 1);
    assert_eq!(a.updates(), 1);
    let tau = a.hyper().tau;
    for (name, t) in a.target_params().iter() {
        let online = a.critic_params().get(name).unwrap();
        let before = prev_target.get(name).unwrap();
        for i in 0..t.len() {
            let e = tau * online.data()[i] + (1.0 - tau) * before.data()[i];
            assert!((t.data()[i] - e).abs() < 1e-12);
        }
    }
    b.update(&batch).unwrap();
    assert_eq!(a.all_params(), b.all_params());
    assert_eq!(a.target_params(), b.target_params());
    a.update(&batch).unwrap();
    assert_eq!(a.updates(), 2);
}

#[test]
fn non_finite_reward_aborts_without_side_effects() {
    let mut batch = env_batch(8, 5);
    batch[3].reward = f64::NAN;
    let mut l = small_learner(1);
    let before = l.clone();
    match l.update(&batch) {
        Err(SacError::NonFiniteLoss { loss: "critic", batch_index }) => assert_eq!(batch_index, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(l.all_params(), before.all_params());
    assert_eq!(l.updates(), 0);
}

#[test]
fn alpha_stays_positive_and_learning_reduces_critic_loss() {
    let batch = env_batch(8, 6);
    let mut l = small_learner(2);
    let first = l.update(&batch).unwrap().critic_loss;
    let mut last = first;
    for _ in 0..200 {
        let m = l.update(&batch).unwrap();
        assert!(m.alpha > 0.0);
        last = m.critic_loss;
    }
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn empty_batch_is_rejected() {
    assert!(matches!(small_learner(0).update(&[]), Err(SacError::EmptyBatch)));
    assert!(BatchTensors::<f32>::from_transitions(&[]).is_err());
}

#[test]
fn acting_modes() {
    let arch = affine_arch();
    let obs = env_batch(1, 0)[0].obs.clone();
    // Observations here are 16x12; act needs 3x3 frames.
    let small_obs = crate::types::Observation {
        image_stack: std::array::from_fn(|_| std::sync::Arc::new(crate::types::Frame::filled(3, 3, [9, 9, 9]))),
        ..obs
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let zero = pinned(0.0, 0.0, 0.0, 0.0);
    let a = act(&arch, &zero, &small_obs, ActMode::Mean, &mut rng).unwrap();
    assert!(a.values().iter().all(|&v| v == 0.0));
    let tight = pinned(0.0, 0.0, 0.6, -10.0);
    let s = act(&arch, &tight, &small_obs, ActMode::Stochastic, &mut rng).unwrap();
    assert!(s.values().iter().all(|&v| (v - 0.6f64.tanh()).abs() < 1e-3));

    let snap = WeightSnapshot::encode(&pinned(0.0, 0.0, 0.1, 0.0).cast::<f32>(), 0);
    let run = |seed| {
        let mut actor = SacActor::new(arch.clone(), &snap, ActMode::Stochastic, seed).unwrap();
        (0..5).map(|_| *actor.act(&small_obs).unwrap().values()).collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn hyper_validation() {
    assert!(SacHyper::default().validate().is_ok());
    for h in [
        SacHyper { gamma: 1.0, ..SacHyper::default() },
        SacHyper { tau: 0.0, ..SacHyper::default() },
        SacHyper { batch_size: 0, ..SacHyper::default() },
        SacHyper { init_temperature: 0.0, ..SacHyper::default() },
    ] {
        assert!(h.validate().is_err());
    }
}
