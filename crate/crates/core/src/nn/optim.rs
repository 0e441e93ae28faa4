//! Adam and SGD-with-momentum parameter updates.

use crate::error::{Error, Result};
use crate::nn::model::{GradientSet, Model};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Adam,
    SgdMomentum,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Adam => "adam",
            Algorithm::SgdMomentum => "sgd_momentum",
        }
    }

    pub fn parse(s: &str) -> Result<Algorithm> {
        match s {
            "adam" => Ok(Algorithm::Adam),
            "sgd_momentum" => Ok(Algorithm::SgdMomentum),
            _ => Err(Error::Config(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub algorithm: Algorithm,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Momentum coefficient for SGD.
    pub mu: f32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(algorithm: Algorithm, learning_rate: f32, model: &Model) -> Optimizer {
        let zeros: Vec<Tensor> = model
            .trainable_params()
            .iter()
            .map(|p| Tensor::zeros(p.shape()).unwrap())
            .collect();
        Optimizer {
            algorithm,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            mu: 0.9,
            m: zeros.clone(),
            v: zeros,
            step_count: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_count
    }

    /// Apply one update. Non-finite gradients abort the step untouched.
    pub fn step(&mut self, model: &mut Model, grads: &GradientSet) -> Result<()> {
        let mut params = model.trainable_params_mut();
        if params.len() != grads.grads.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameter tensors",
                grads.grads.len(),
                params.len()
            )));
        }
        if !grads.all_finite() {
            return Err(Error::Numeric(
                "non-finite gradient; optimizer step aborted".into(),
            ));
        }
        self.step_count += 1;
        let t = self.step_count as f32;
        match self.algorithm {
            Algorithm::Adam => {
                let bc1 = 1.0 - self.beta1.powf(t);
                let bc2 = 1.0 - self.beta2.powf(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(&grads.grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..g.len() {
                        let gi = g.data()[i];
                        let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                        let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                        m.data_mut()[i] = mi;
                        v.data_mut()[i] = vi;
                        let mhat = mi / bc1;
                        let vhat = vi / bc2;
                        p.data_mut()[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
                    }
                }
            }
            Algorithm::SgdMomentum => {
                for ((p, g), vel) in params.iter_mut().zip(&grads.grads).zip(self.m.iter_mut()) {
                    for i in 0..g.len() {
                        let vi = self.mu * vel.data()[i] - self.learning_rate * g.data()[i];
                        vel.data_mut()[i] = vi;
                        p.data_mut()[i] += vi;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::build_toy_model;

    fn zero_grads(model: &Model) -> GradientSet {
        GradientSet {
            grads: model
                .trainable_params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()).unwrap())
                .collect(),
        }
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut m = build_toy_model(3, 8, 1).unwrap();
        let before: Vec<Tensor> = m.trainable_params().into_iter().cloned().collect();
        let mut opt = Optimizer::new(Algorithm::Adam, 1e-3, &m);
        let grads = zero_grads(&m);
        opt.step(&mut m, &grads).unwrap();
        for (a, b) in before.iter().zip(m.trainable_params()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn adam_first_step_magnitude_is_about_lr() {
        // Hand-evaluated recurrence at t=1 with g=1: update = lr / (1 + eps').
        let mut m = build_toy_model(3, 8, 1).unwrap();
        let mut opt = Optimizer::new(Algorithm::Adam, 1e-3, &m);
        let grads = GradientSet {
            grads: m
                .trainable_params()
                .iter()
                .map(|p| Tensor::new(p.shape(), 1.0).unwrap())
                .collect(),
        };
        let before = m.trainable_params()[0].clone();
        opt.step(&mut m, &grads).unwrap();
        let after = m.trainable_params()[0].clone();
        for (a, b) in before.data().iter().zip(after.data()) {
            let update = a - b;
            assert!((update - 1e-3).abs() < 1e-6, "update = {update}");
        }
    }

    #[test]
    fn sgd_zero_momentum_is_vanilla_sgd() {
        let mut m = build_toy_model(3, 8, 1).unwrap();
        let mut opt = Optimizer::new(Algorithm::SgdMomentum, 0.1, &m);
        opt.mu = 0.0;
        let grads = GradientSet {
            grads: m
                .trainable_params()
                .iter()
                .map(|p| Tensor::new(p.shape(), 2.0).unwrap())
                .collect(),
        };
        let before = m.trainable_params()[0].clone();
        opt.step(&mut m, &grads).unwrap();
        let after = m.trainable_params()[0].clone();
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((a - 0.1 * 2.0 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut m = build_toy_model(3, 8, 1).unwrap();
        let mut opt = Optimizer::new(Algorithm::Adam, 1e-3, &m);
        let mut grads = zero_grads(&m);
        grads.grads[0].data_mut()[0] = f32::NAN;
        let before = m.trainable_params()[0].clone();
        assert!(opt.step(&mut m, &grads).is_err());
        assert_eq!(&before, m.trainable_params()[0]);
        assert_eq!(opt.steps_taken(), 0);
    }
}
