//! Gradient descent and Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, clip_norm: f64, n_params: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Self {
            kind,
            lr,
            clip_norm,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            t: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * scale * g;
                }
            }
            OptimizerKind::Adam => {
                let b1t = 1.0 - self.beta1.powi(self.t as i32);
                let b2t = 1.0 - self.beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grads[i] * scale;
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let mh = self.m[i] / b1t;
                    let vh = self.v[i] / b2t;
                    params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(kind: OptimizerKind, lr: f64) -> f64 {
        let mut x = vec![3.0, -2.0];
        let mut opt = Optimizer::new(kind, lr, 0.0, 2);
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.0), 4.0 * (x[1] + 0.5)];
            opt.step(&mut x, &g);
        }
        (x[0] - 1.0).abs() + (x[1] + 0.5).abs()
    }

    #[test]
    fn both_optimizers_converge() {
        assert!(minimize(OptimizerKind::Sgd, 0.1) < 1e-9);
        assert!(minimize(OptimizerKind::Adam, 0.01) < 1e-3);
    }

    #[test]
    fn clipping_bounds_the_update() {
        let mut x = vec![0.0];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1.0, 0.5, 1);
        opt.step(&mut x, &[100.0]);
        assert_eq!(x[0], -0.5);
    }
}
