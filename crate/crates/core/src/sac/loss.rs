//! SAC objectives recorded on a [`Graph`].
//!
//! Parameter sets are passed as [`Bound`] handles so the same functions serve
//! gradient computation (trainable leaves) and evaluation (constants).

use crate::nn::{image_batch, proprio_batch, action_batch, Architecture, Bound, Graph, Real, Tensor, Var};
use crate::types::{Transition, JOINTS};

use super::SacError;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A minibatch laid out for the networks.
#[derive(Debug, Clone)]
pub struct BatchTensors<T> {
    pub images: Tensor<T>,
    pub proprio: Tensor<T>,
    pub actions: Tensor<T>,
    /// `[B, 1]`
    pub rewards: Tensor<T>,
    pub next_images: Tensor<T>,
    pub next_proprio: Tensor<T>,
}

impl<T: Real> BatchTensors<T> {
    pub fn from_transitions(batch: &[Transition]) -> Result<Self, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let obs: Vec<_> = batch.iter().map(|t| &t.obs).collect();
        let next: Vec<_> = batch.iter().map(|t| &t.next_obs).collect();
        let acts: Vec<[f64; JOINTS]> = batch.iter().map(|t| *t.action.values()).collect();
        Ok(Self {
            images: image_batch(&obs)?,
            proprio: proprio_batch(&obs),
            actions: action_batch(&acts),
            rewards: Tensor::from_vec(&[batch.len(), 1], batch.iter().map(|t| T::c(t.reward)).collect()),
            next_images: image_batch(&next)?,
            next_proprio: proprio_batch(&next),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reparameterized tanh-Gaussian sample `a = tanh(mean + exp(log_std) * eps)`
/// and its log-density `[B, 1]` with the change-of-variables correction.
pub fn squashed_sample<T: Real>(
    g: &mut Graph<T>,
    mean: Var,
    log_std: Var,
    eps: &Tensor<T>,
) -> Result<(Var, Var), SacError> {
    let gauss_const = eps.map(|e| T::c(-0.5) * e * e - T::c(HALF_LN_2PI));
    let eps = g.input(eps.clone());
    let std = g.exp(log_std);
    let noise = g.mul(std, eps)?;
    let u = g.add(mean, noise)?;
    let a = g.tanh(u);
    let jac = g.log_one_minus_tanh_sq(u);
    let c = g.input(gauss_const);
    let per = g.sub(c, log_std)?;
    let per = g.sub(per, jac)?;
    let logp = g.sum_cols(per);
    Ok((a, logp))
}

/// `min(Q1_target, Q2_target)(s', a') - alpha * log pi(a' | s')` with
/// `a'` drawn from the policy; `[B, 1]`. Bind everything as constants.
#[allow(clippy::too_many_arguments)]
pub fn soft_value<T: Real>(
    arch: &Architecture,
    g: &mut Graph<T>,
    encoder: &Bound,
    target: &Bound,
    actor: &Bound,
    next_images: Var,
    next_proprio: Var,
    eps: &Tensor<T>,
    alpha: T,
) -> Result<Var, SacError> {
    let feat = arch.encode(g, encoder, next_images)?;
    let (mean, log_std) = arch.policy(g, actor, feat, next_proprio)?;
    let (a, logp) = squashed_sample(g, mean, log_std, eps)?;
    let q1 = arch.q_value(g, target, "q1", feat, next_proprio, a)?;
    let q2 = arch.q_value(g, target, "q2", feat, next_proprio, a)?;
    let q = g.min(q1, q2)?;
    let ent = g.scale(logp, alpha);
    Ok(g.sub(q, ent)?)
}

/// `y = r + gamma * v`, `[B, 1]`.
pub fn td_target<T: Real>(rewards: &Tensor<T>, soft_value: &Tensor<T>, gamma: f64) -> Tensor<T> {
    let gamma = T::c(gamma);
    let data = rewards.data().iter().zip(soft_value.data()).map(|(&r, &v)| r + gamma * v).collect();
    Tensor::from_vec(rewards.shape(), data)
}

pub struct CriticOutputs {
    pub loss: Var,
    pub q1: Var,
    pub q2: Var,
    pub features: Var,
}

/// `mean(0.5 (Q1 - y)^2) + mean(0.5 (Q2 - y)^2)`.
pub fn critic_loss<T: Real>(
    arch: &Architecture,
    g: &mut Graph<T>,
    critic: &Bound,
    images: Var,
    proprio: Var,
    actions: Var,
    y: Var,
) -> Result<CriticOutputs, SacError> {
    let features = arch.encode(g, critic, images)?;
    let q1 = arch.q_value(g, critic, "q1", features, proprio, actions)?;
    let q2 = arch.q_value(g, critic, "q2", features, proprio, actions)?;
    let mut terms = Vec::with_capacity(2);
    for q in [q1, q2] {
        let d = g.sub(q, y)?;
        let sq = g.square(d);
        let m = g.mean(sq);
        terms.push(g.scale(m, T::c(0.5)));
    }
    let loss = g.add(terms[0], terms[1])?;
    Ok(CriticOutputs { loss, q1, q2, features })
}

pub struct ActorOutputs {
    pub loss: Var,
    pub log_prob: Var,
}

/// `mean(alpha * log pi(a | s) - min(Q1, Q2)(s, a))` with `a` resampled
/// through the reparameterization, so the gradient flows through `a` into Q.
#[allow(clippy::too_many_arguments)]
pub fn actor_loss<T: Real>(
    arch: &Architecture,
    g: &mut Graph<T>,
    actor: &Bound,
    critic: &Bound,
    features: Var,
    proprio: Var,
    eps: &Tensor<T>,
    alpha: T,
) -> Result<ActorOutputs, SacError> {
    let (mean, log_std) = arch.policy(g, actor, features, proprio)?;
    let (a, log_prob) = squashed_sample(g, mean, log_std, eps)?;
    let q1 = arch.q_value(g, critic, "q1", features, proprio, a)?;
    let q2 = arch.q_value(g, critic, "q2", features, proprio, a)?;
    let q = g.min(q1, q2)?;
    let ent = g.scale(log_prob, alpha);
    let per = g.sub(ent, q)?;
    let loss = g.mean(per);
    Ok(ActorOutputs { loss, log_prob })
}

/// `mean(-log_alpha * (log pi + target_entropy))`; `log_prob` should be a
/// constant.
pub fn temperature_loss<T: Real>(g: &mut Graph<T>, log_alpha: Var, log_prob: Var, target_entropy: f64) -> Result<Var, SacError> {
    let shifted = g.add_scalar(log_prob, T::c(target_entropy));
    let m = g.mean(shifted);
    let prod = g.mul(log_alpha, m)?;
    Ok(g.scale(prod, -T::one()))
}

/// First row whose value is not finite.
pub fn first_non_finite<T: Real>(t: &Tensor<T>) -> Option<usize> {
    let cols = t.cols().max(1);
    t.data().iter().position(|v| !v.is_finite()).map(|i| i / cols)
}
