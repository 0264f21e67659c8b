use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied to the parameters directly, never to the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "adam state holds {} parameters but got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::divergence(format!("non-finite gradient at index {i}: {}", grads[i])));
        }
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * weight_decay * params[i];
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamConfig {
        AdamConfig { weight_decay: 0.0, ..AdamConfig::default() }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let mut adam = AdamState::new(no_decay(), 1);
        let mut p = [0.0];
        adam.step(&mut p, &[0.5]).unwrap();
        let expected = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut adam = AdamState::new(no_decay(), 3);
        let mut p = [1.0, -2.0, 0.25];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.25]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn opposite_gradients_give_mirrored_updates() {
        let mut a = AdamState::new(no_decay(), 2);
        let mut b = AdamState::new(no_decay(), 2);
        let (mut pa, mut pb) = ([0.0, 0.0], [0.0, 0.0]);
        a.step(&mut pa, &[0.3, -1.2]).unwrap();
        b.step(&mut pb, &[-0.3, 1.2]).unwrap();
        assert_eq!(pa[0], -pb[0]);
        assert_eq!(pa[1], -pb[1]);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut adam = AdamState::new(AdamConfig::default(), 1);
        let mut p = [2.0];
        adam.step(&mut p, &[0.0]).unwrap();
        assert!((p[0] - (2.0 - 0.001 * 1e-4 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_fails_fast() {
        let mut adam = AdamState::new(no_decay(), 2);
        let mut p = [0.0, 0.0];
        assert!(matches!(adam.step(&mut p, &[f64::NAN, 0.0]), Err(Error::Divergence(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = AdamState::new(no_decay(), 2);
        assert!(matches!(adam.step(&mut [0.0], &[0.0]), Err(Error::Config(_))));
    }
}
