use super::params::{Gradients, ParamSet};
use super::tensor::Float;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for every parameter of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected Adam update. Rejects the whole step, naming the parameter,
    /// if any gradient entry is NaN or infinite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Gradients<T>) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(Error::Invalid(format!(
                "optimizer tracks {} parameters, model has {}",
                self.first.len(),
                params.len()
            )));
        }
        if let Some(bad) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient(params.name(bad).to_string()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let lr = T::of(learning_rate);
        let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(epsilon));
        let corr1 = T::one() - b1.powi(t);
        let corr2 = T::one() - b2.powi(t);

        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let value = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            if m.len() != value.len() {
                return Err(Error::Invalid(format!(
                    "optimizer state shape drifted for parameter {i}"
                )));
            }
            let g = grads.dense(id, value.len());
            for (((p, mi), vi), &gi) in value.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&g) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn scalar_model(x: f64) -> (ParamSet<f64>, crate::numerics::ParamId) {
        let mut p = ParamSet::new();
        let id = p.insert("theta", Tensor::scalar(x)).unwrap();
        (p, id)
    }

    fn grad(id: crate::numerics::ParamId, g: f64) -> Gradients<f64> {
        let mut out = Gradients::new(1);
        out.add_dense(id, &[g]);
        out
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut p, id) = scalar_model(0.0);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        adam.step(&mut p, &grad(id, 1.0)).unwrap();
        let expected = -5e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(id).data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut p, id) = scalar_model(0.75);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut p, &grad(id, 0.0)).unwrap();
        }
        assert_eq!(p.get(id).data()[0], 0.75);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_sign() {
        for g in [2.0, -0.3] {
            let (mut p, id) = scalar_model(1.0);
            let mut adam = AdamState::new(&p, AdamConfig::default());
            let mut prev = 1.0;
            for _ in 0..2 {
                adam.step(&mut p, &grad(id, g)).unwrap();
                let now = p.get(id).data()[0];
                assert!((now - prev) * g < 0.0);
                prev = now;
            }
            // With a constant gradient m̂ = g and v̂ = g² at every step.
            let expected = 1.0 - 2.0 * 5e-4 * g / (g.abs() + 1e-8);
            assert!((prev - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let (mut p, id) = scalar_model(0.0);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let err = adam.step(&mut p, &grad(id, f64::NAN)).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(adam.step_count(), 0);
    }
}
