//! Learner state, the update step and the acting side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{image_batch, proprio_batch, Adam, Architecture, Graph, ParamSet, Real, Tensor, WeightSnapshot};
use crate::types::{clamp_action, Action, Observation, Transition, JOINTS};

use super::loss::{self, BatchTensors};
use super::{SacError, SacHyper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateMetrics {
    /// 1-based index of the update just applied.
    pub update: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// The update side of a pipeline.
pub trait Learner: Send {
    fn update(&mut self, batch: &[Transition]) -> Result<UpdateMetrics, SacError>;
    /// Current weights, versioned by the number of updates applied.
    fn snapshot(&self) -> WeightSnapshot;
    fn updates(&self) -> u64;
}

/// The acting side of a pipeline.
pub trait Agent: Send {
    fn load(&mut self, snapshot: &WeightSnapshot) -> Result<(), SacError>;
    fn act(&mut self, obs: &Observation) -> Result<Action, SacError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Mean,
}

fn normal_tensor<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::c(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::from_vec(&[rows, cols], data)
}

/// SAC with twin critics sharing an image encoder with the critic's
/// gradient. Target critics track the online trunks and read features from
/// the online encoder.
#[derive(Debug, Clone)]
pub struct SacLearner<T: Real = f32> {
    arch: Architecture,
    hyper: SacHyper,
    /// `enc.*`, `q1.*`, `q2.*`
    critic: ParamSet<T>,
    /// `pi.*`
    actor: ParamSet<T>,
    /// `q1.*`, `q2.*`
    target: ParamSet<T>,
    log_alpha: ParamSet<T>,
    opt_critic: Adam<T>,
    opt_actor: Adam<T>,
    opt_alpha: Adam<T>,
    rng: ChaCha8Rng,
    updates: u64,
}

impl<T: Real> SacLearner<T> {
    pub fn new(arch: Architecture, hyper: SacHyper, seed: u64) -> Result<Self, SacError> {
        hyper.validate()?;
        let all = arch.init::<T>(seed)?;
        let mut critic = all.subset("enc.");
        critic.merge(&all.subset("q"))?;
        let actor = all.subset("pi.");
        let target = all.subset("q");
        let mut log_alpha = ParamSet::new();
        log_alpha.insert("log_alpha", Tensor::from_f64(&[1], &[hyper.init_temperature.ln()]))?;
        Ok(Self {
            opt_critic: Adam::new(&critic, hyper.lr_critic),
            opt_actor: Adam::new(&actor, hyper.lr_actor),
            opt_alpha: Adam::with_betas(&log_alpha, hyper.lr_alpha, 0.5, 0.999),
            arch,
            hyper,
            critic,
            actor,
            target,
            log_alpha,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5ac5_ac5a_c5ac_5ac5),
            updates: 0,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn hyper(&self) -> &SacHyper {
        &self.hyper
    }

    pub fn critic_params(&self) -> &ParamSet<T> {
        &self.critic
    }

    pub fn actor_params(&self) -> &ParamSet<T> {
        &self.actor
    }

    pub fn target_params(&self) -> &ParamSet<T> {
        &self.target
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.get("log_alpha").unwrap().data()[0].f64().exp()
    }

    /// Encoder, critics, policy and temperature in one set.
    pub fn all_params(&self) -> ParamSet<T> {
        let mut p = self.critic.clone();
        p.merge(&self.actor).expect("disjoint prefixes");
        p.merge(&self.log_alpha).expect("disjoint prefixes");
        p
    }

    /// One critic step, one policy step, one temperature step, then Polyak
    /// averaging. On error the learner is left exactly as it was.
    pub fn update_tensors(&mut self, batch: &BatchTensors<T>) -> Result<UpdateMetrics, SacError> {
        let saved = self.clone();
        let result = self.try_update(batch);
        if result.is_err() {
            *self = saved;
        }
        result
    }

    fn try_update(&mut self, batch: &BatchTensors<T>) -> Result<UpdateMetrics, SacError> {
        let n = batch.len();
        if n == 0 {
            return Err(SacError::EmptyBatch);
        }
        let arch = self.arch.clone();
        let alpha = T::c(self.alpha());
        let eps_next = normal_tensor::<T, _>(&mut self.rng, n, JOINTS);
        let eps_now = normal_tensor::<T, _>(&mut self.rng, n, JOINTS);

        // Bootstrap targets, no gradient anywhere.
        let y = {
            let mut g = Graph::new();
            let enc = self.critic.bind_const(&mut g);
            let tgt = self.target.bind_const(&mut g);
            let act = self.actor.bind_const(&mut g);
            let ni = g.input(batch.next_images.clone());
            let np = g.input(batch.next_proprio.clone());
            let v = loss::soft_value(&arch, &mut g, &enc, &tgt, &act, ni, np, &eps_next, alpha)?;
            if let Some(i) = loss::first_non_finite(g.value(v)) {
                return Err(SacError::NonFiniteLoss { loss: "soft value", batch_index: i });
            }
            loss::td_target(&batch.rewards, g.value(v), self.hyper.gamma)
        };

        // Critic and encoder.
        let (critic_loss, features) = {
            let mut g = Graph::new();
            let b = self.critic.bind(&mut g);
            let img = g.input(batch.images.clone());
            let pro = g.input(batch.proprio.clone());
            let act = g.input(batch.actions.clone());
            let yv = g.input(y);
            let out = loss::critic_loss(&arch, &mut g, &b, img, pro, act, yv)?;
            let value = g.scalar(out.loss);
            if !value.is_finite() {
                let i = loss::first_non_finite(g.value(out.q1))
                    .or_else(|| loss::first_non_finite(g.value(out.q2)))
                    .or_else(|| loss::first_non_finite(g.value(yv)))
                    .unwrap_or(0);
                return Err(SacError::NonFiniteLoss { loss: "critic", batch_index: i });
            }
            let features = g.value(out.features).clone();
            let mut grads = g.backward(out.loss)?;
            let grads = b.grads(&self.critic, &mut grads);
            self.opt_critic.step(&mut self.critic, &grads)?;
            (value.f64(), features)
        };

        // Policy, on detached pre-update features.
        let log_prob = {
            let mut g = Graph::new();
            let b = self.actor.bind(&mut g);
            let c = self.critic.bind_const(&mut g);
            let feat = g.input(features);
            let pro = g.input(batch.proprio.clone());
            let out = loss::actor_loss(&arch, &mut g, &b, &c, feat, pro, &eps_now, alpha)?;
            let value = g.scalar(out.loss);
            if !value.is_finite() {
                let i = loss::first_non_finite(g.value(out.log_prob)).unwrap_or(0);
                return Err(SacError::NonFiniteLoss { loss: "actor", batch_index: i });
            }
            let log_prob = g.value(out.log_prob).clone();
            let mut grads = g.backward(out.loss)?;
            let grads = b.grads(&self.actor, &mut grads);
            self.opt_actor.step(&mut self.actor, &grads)?;
            (value.f64(), log_prob)
        };
        let (actor_loss, log_prob) = log_prob;

        // Temperature.
        {
            let mut g = Graph::new();
            let b = self.log_alpha.bind(&mut g);
            let lp = g.input(log_prob);
            let l = loss::temperature_loss(&mut g, b.var("log_alpha"), lp, self.hyper.target_entropy)?;
            let mut grads = g.backward(l)?;
            let grads = b.grads(&self.log_alpha, &mut grads);
            self.opt_alpha.step(&mut self.log_alpha, &grads)?;
        }

        self.target.polyak_update(&self.critic, T::c(self.hyper.tau))?;
        if !(self.critic.is_finite() && self.actor.is_finite() && self.log_alpha.is_finite()) {
            return Err(SacError::NonFiniteLoss { loss: "parameters", batch_index: 0 });
        }
        self.updates += 1;
        Ok(UpdateMetrics {
            update: self.updates,
            critic_loss,
            actor_loss,
            alpha: self.alpha(),
        })
    }
}

impl<T: Real> Learner for SacLearner<T> {
    fn update(&mut self, batch: &[Transition]) -> Result<UpdateMetrics, SacError> {
        let tensors = BatchTensors::from_transitions(batch)?;
        self.update_tensors(&tensors)
    }

    fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::encode(&self.all_params(), self.updates)
    }

    fn updates(&self) -> u64 {
        self.updates
    }
}

/// Counts updates without computing anything. Used where only timing and
/// accounting matter.
#[derive(Debug, Clone, Default)]
pub struct NullLearner {
    updates: u64,
}

impl NullLearner {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Learner for NullLearner {
    fn update(&mut self, batch: &[Transition]) -> Result<UpdateMetrics, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        self.updates += 1;
        Ok(UpdateMetrics {
            update: self.updates,
            critic_loss: 0.0,
            actor_loss: 0.0,
            alpha: 0.0,
        })
    }

    fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::encode(&ParamSet::<f32>::new(), self.updates)
    }

    fn updates(&self) -> u64 {
        self.updates
    }
}

/// Samples an action from the policy stored in `params` (`enc.*` and `pi.*`).
pub fn act<T: Real, R: Rng>(
    arch: &Architecture,
    params: &ParamSet<T>,
    obs: &Observation,
    mode: ActMode,
    rng: &mut R,
) -> Result<Action, SacError> {
    let mut g = Graph::new();
    let b = params.bind_const(&mut g);
    let img = g.input(image_batch(&[obs])?);
    let pro = g.input(proprio_batch(&[obs]));
    let feat = arch.encode(&mut g, &b, img)?;
    let (mean, log_std) = arch.policy(&mut g, &b, feat, pro)?;
    let raw: Vec<f64> = match mode {
        ActMode::Mean => g.value(mean).data().iter().map(|v| v.f64().tanh()).collect(),
        ActMode::Stochastic => {
            let eps = normal_tensor::<T, _>(rng, 1, JOINTS);
            let (a, _) = loss::squashed_sample(&mut g, mean, log_std, &eps)?;
            g.value(a).to_f64()
        }
    };
    let mut arr = [0.0; JOINTS];
    arr.copy_from_slice(&raw);
    Ok(clamp_action(&arr)?)
}

/// Policy-driven agent fed by weight snapshots.
#[derive(Debug, Clone)]
pub struct SacActor {
    arch: Architecture,
    params: ParamSet<f32>,
    mode: ActMode,
    rng: ChaCha8Rng,
    version: u64,
}

impl SacActor {
    pub fn new(arch: Architecture, initial: &WeightSnapshot, mode: ActMode, seed: u64) -> Result<Self, SacError> {
        let mut a = Self {
            arch,
            params: ParamSet::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            version: 0,
        };
        a.load(initial)?;
        Ok(a)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_mode(&mut self, mode: ActMode) {
        self.mode = mode;
    }
}

impl Agent for SacActor {
    fn load(&mut self, snapshot: &WeightSnapshot) -> Result<(), SacError> {
        let all: ParamSet<f32> = snapshot.restore()?;
        let mut p = all.subset("enc.");
        p.merge(&all.subset("pi."))?;
        self.params = p;
        self.version = snapshot.version();
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Action, SacError> {
        act(&self.arch, &self.params, obs, self.mode, &mut self.rng)
    }
}

/// Uniform actions on `[-1, 1]^7`; ignores weights.
#[derive(Debug, Clone)]
pub struct RandomActor {
    rng: ChaCha8Rng,
}

impl RandomActor {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> Action {
        let v: [f64; JOINTS] = std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0));
        clamp_action(&v).expect("finite by construction")
    }
}

impl Agent for RandomActor {
    fn load(&mut self, _snapshot: &WeightSnapshot) -> Result<(), SacError> {
        Ok(())
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action, SacError> {
        Ok(self.sample())
    }
}
