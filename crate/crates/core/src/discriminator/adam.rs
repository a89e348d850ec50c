use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive moment estimation state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Applies one bias-corrected step to `params` in place.
    pub fn step(&self, params: &mut [f64], grad: &[f64]) -> Result<Self> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::domain("optimizer state does not match the parameter vector"));
        }
        let mut next = self.clone();
        next.step += 1;
        let t = next.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            next.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            next.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = next.m[i] / c1;
            let v_hat = next.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_is_noop() {
        let mut p = vec![1.0, -2.0, 3.0];
        let s = AdamState::new(3, 1e-3).step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0, 0.0];
        AdamState::new(2, 0.01).step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![5.0, -3.0];
        let mut s = AdamState::new(2, 0.1);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * (p[1] - 1.0)];
            s = s.step(&mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 1e-3 && (p[1] - 1.0).abs() < 1e-3);
    }
}
