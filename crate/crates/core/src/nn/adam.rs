//! Adam with bias correction.

use super::params::ParamSet;
use super::tensor::Real;
use super::NnError;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ParamSet<T>,
    v: ParamSet<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999)
    }

    pub fn with_betas(params: &ParamSet<T>, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Non-finite gradients abort before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<(), NnError> {
        if !grads.same_layout(params) {
            return Err(NnError::Shape("gradient layout differs from parameters".into()));
        }
        for (name, g) in grads.iter() {
            if let Some((index, &value)) = g.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    name: name.to_string(),
                    index,
                    value: value.f64(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let c1 = T::c(1.0 - self.beta1.powi(t));
        let c2 = T::c(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::c(self.lr), T::c(self.eps));
        let one = T::one();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn single(v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::from_f64(&[2], &[v, -v])).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // At t = 1, m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = single(1.0);
        let g = single(0.3);
        let mut opt = Adam::new(&p, 1e-3);
        opt.step(&mut p, &g).unwrap();
        let x = p.get("x").unwrap().data();
        let d = 1e-3 * 0.3 / (0.3 + 1e-8);
        assert!((x[0] - (1.0 - d)).abs() < 1e-15);
        assert!((x[1] - (-1.0 + d)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_is_reported_and_nothing_changes() {
        let mut p = single(1.0);
        let mut g = single(0.3);
        g.get_mut("x").unwrap().data_mut()[1] = f64::NAN;
        let mut opt = Adam::new(&p, 1e-3);
        let err = opt.step(&mut p, &g).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { index: 1, .. }));
        assert_eq!(p, single(1.0));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = single(2.0);
        let mut opt = Adam::new(&p, 0.05);
        for _ in 0..2000 {
            let g = p.clone(); // gradient of 0.5 * x^2
            opt.step(&mut p, &g).unwrap();
        }
        assert!(p.get("x").unwrap().data().iter().all(|v| v.abs() < 1e-2));
    }
}
