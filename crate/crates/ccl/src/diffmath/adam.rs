//! Trainable parameters and the Adam update.

use crate::error::{Error, Result};
use crate::diffmath::Tensor;
use serde::{Deserialize, Serialize};

/// A named tensor with its gradient and Adam moment accumulators.
///
/// Gradient and moments always shape-match the value tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    m: Tensor,
    v: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape.clone()),
            m: Tensor::zeros(shape.clone()),
            v: Tensor::zeros(shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.zero_fill();
    }

    /// Add a gradient contribution, scaled by `scale`.
    pub fn accumulate_grad(&mut self, grad: &Tensor, scale: f64) -> Result<()> {
        if !self.grad.same_shape(grad) {
            return Err(Error::shape(
                "accumulate_grad",
                format!("{:?}", self.grad.shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        for (dst, src) in self.grad.data_mut().iter_mut().zip(grad.data()) {
            *dst += scale * src;
        }
        Ok(())
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid("lr", "must be finite and >= 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(name, "must be in [0, 1)"));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon", "must be > 0"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam step over a set of parameters.
///
/// `step_index` is 1-based; the same index must be passed for every parameter
/// updated in the same optimizer step.
pub fn adam_step(params: &mut [&mut Parameter], config: &AdamConfig, step_index: u64) -> Result<()> {
    if step_index == 0 {
        return Err(Error::invalid("step_index", "must be >= 1"));
    }
    let bc1 = 1.0 - config.beta1.powi(step_index as i32);
    let bc2 = 1.0 - config.beta2.powi(step_index as i32);
    for p in params.iter_mut() {
        let n = p.value.len();
        debug_assert_eq!(p.grad.len(), n);
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = config.beta1 * p.m.data()[i] + (1.0 - config.beta1) * g;
            let v = config.beta2 * p.v.data()[i] + (1.0 - config.beta2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            p.value.data_mut()[i] -= config.lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Parameter::new("w", Tensor::from_vec(vec![1.0, -2.0]));
        let before = p.value.clone();
        adam_step(&mut [&mut p], &AdamConfig::with_lr(0.1), 1).unwrap();
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_matches_hand_formula() {
        // g=1, lr=0.1: bias correction gives m_hat = v_hat = 1,
        // so the update is -0.1 / (1 + eps) ~ -0.1.
        let mut p = Parameter::new("w", Tensor::from_vec(vec![0.0]));
        p.grad = Tensor::from_vec(vec![1.0]);
        adam_step(&mut [&mut p], &AdamConfig::with_lr(0.1), 1).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert!((p.value.data()[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut p = Parameter::new("w", Tensor::from_vec(vec![0.5, -0.25]));
            for step in 1..=20u64 {
                p.grad = Tensor::from_vec(vec![0.3 * step as f64, -0.1]);
                adam_step(&mut [&mut p], &AdamConfig::with_lr(0.01), step).unwrap();
            }
            p.value.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_index_zero_rejected() {
        let mut p = Parameter::new("w", Tensor::from_vec(vec![0.0]));
        assert!(adam_step(&mut [&mut p], &AdamConfig::default(), 0).is_err());
    }
}
