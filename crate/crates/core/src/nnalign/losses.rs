//! Scalar losses and their gradients.

use crate::error::{Error, Result};
use crate::geom::JitterSample;

/// Bounds applied to `log σ` before exponentiation.
pub const LOG_SIGMA_MIN: f64 = -6.0;
pub const LOG_SIGMA_MAX: f64 = 6.0;

/// Diagonal Gaussian; `sigma = exp(log_sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Self {
        Self { mu, log_sigma }
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|s| s.exp()).collect()
    }
}

/// Gradient of a scalar with respect to a [`GaussianParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl GaussianGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        }
    }
}

/// `ξ = μ + σ ⊙ ε`.
pub fn reparameterize(params: &GaussianParams, epsilon: &[f64]) -> Result<Vec<f64>> {
    if epsilon.len() != params.dim() {
        return Err(Error::InvalidArgument(format!(
            "noise has length {}, expected {}",
            epsilon.len(),
            params.dim()
        )));
    }
    Ok(params
        .mu
        .iter()
        .zip(&params.log_sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s.exp() * e)
        .collect())
}

/// `‖Δφ̂ − Δφ‖² + ‖Δθ̂ − Δθ‖²`, with its gradient with respect to the prediction.
pub fn rotation_loss(pred: &JitterSample, truth: &JitterSample) -> (f64, [f64; 2]) {
    let dr = pred.delta_roll - truth.delta_roll;
    let dp = pred.delta_pitch - truth.delta_pitch;
    (dr * dr + dp * dp, [2.0 * dr, 2.0 * dp])
}

/// Binary cross-entropy on a logit, numerically stable; returns `(loss, dloss/dlogit)`.
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    (loss, super::params::sigmoid(logit) - target)
}

pub fn smooth_l1(x: f64, beta: f64) -> (f64, f64) {
    if x.abs() < beta {
        (0.5 * x * x / beta, x / beta)
    } else {
        (x.abs() - 0.5 * beta, x.signum())
    }
}

/// KL over diagonal Gaussians given as means and variances.
fn kl_from_var(mp: &[f64], vp: &[f64], mq: &[f64], vq: &[f64]) -> f64 {
    mp.iter()
        .zip(vp)
        .zip(mq.iter().zip(vq))
        .map(|((m1, v1), (m2, v2))| {
            let d = m1 - m2;
            0.5 * (v2.ln() - v1.ln()) + (v1 + d * d) / (2.0 * v2) - 0.5
        })
        .sum()
}

/// Closed-form `KL(p ‖ q)` for diagonal Gaussians.
pub fn kl_gaussian(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(p
        .mu
        .iter()
        .zip(&p.log_sigma)
        .zip(q.mu.iter().zip(&q.log_sigma))
        .map(|((m1, s1), (m2, s2))| {
            let d = m1 - m2;
            let v1 = (2.0 * s1).exp();
            let v2 = (2.0 * s2).exp();
            (s2 - s1) + (v1 + d * d) / (2.0 * v2) - 0.5
        })
        .sum())
}

/// Gradient of `KL(p ‖ q)` with respect to `q`.
pub fn kl_gaussian_grad_q(p: &GaussianParams, q: &GaussianParams) -> GaussianGrad {
    let mut g = GaussianGrad::zeros(q.dim());
    for i in 0..q.dim() {
        let d = p.mu[i] - q.mu[i];
        let v1 = (2.0 * p.log_sigma[i]).exp();
        let v2 = (2.0 * q.log_sigma[i]).exp();
        g.mu[i] = -d / v2;
        g.log_sigma[i] = 1.0 - (v1 + d * d) / v2;
    }
    g
}

/// Moment-matched diagonal Gaussian of a batch: pooled mean and
/// `var = mean(σ²) + mean((μ − m)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Variance floor, `exp(2·LOG_SIGMA_MIN)`.
pub fn var_floor() -> f64 {
    (2.0 * LOG_SIGMA_MIN).exp()
}

impl BatchGaussian {
    pub fn from_members(members: &[GaussianParams]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::EmptyInput("empty Gaussian batch".into()))?;
        let dim = first.dim();
        if members.iter().any(|m| m.dim() != dim) {
            return Err(Error::InvalidArgument("mixed dimensions in batch".into()));
        }
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for m in members {
            for (a, v) in mean.iter_mut().zip(&m.mu) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n);
        let mut var = vec![0.0; dim];
        let mut spread = vec![0.0; dim];
        for m in members {
            for i in 0..dim {
                var[i] += (2.0 * m.log_sigma[i]).exp();
                let d = m.mu[i] - mean[i];
                spread[i] += d * d;
            }
        }
        for i in 0..dim {
            var[i] = (var[i] / n + spread[i] / n).max(var_floor());
        }
        Ok(Self { mean, var })
    }

    pub fn to_params(&self) -> GaussianParams {
        GaussianParams::new(
            self.mean.clone(),
            self.var.iter().map(|v| 0.5 * v.ln()).collect(),
        )
    }
}

/// `KL(source_batch ‖ target_batch)` with gradients for the target members only;
/// the source side is a constant.
pub fn batch_kl_alignment(
    source: &[GaussianParams],
    target: &[GaussianParams],
) -> Result<(f64, Vec<GaussianGrad>)> {
    let src = BatchGaussian::from_members(source)?;
    batch_kl_against(&src, target)
}

/// [`batch_kl_alignment`] against a precomputed source batch.
pub fn batch_kl_against(
    src: &BatchGaussian,
    target: &[GaussianParams],
) -> Result<(f64, Vec<GaussianGrad>)> {
    let tgt = BatchGaussian::from_members(target)?;
    if src.mean.len() != tgt.mean.len() {
        return Err(Error::InvalidArgument("source/target dimension mismatch".into()));
    }
    let loss = kl_from_var(&src.mean, &src.var, &tgt.mean, &tgt.var);

    let dim = tgt.mean.len();
    let n = target.len() as f64;
    let mut d_mean = vec![0.0; dim];
    let mut d_var = vec![0.0; dim];
    for i in 0..dim {
        let d = src.mean[i] - tgt.mean[i];
        d_mean[i] = -d / tgt.var[i];
        d_var[i] = 0.5 / tgt.var[i] - (src.var[i] + d * d) / (2.0 * tgt.var[i] * tgt.var[i]);
        if tgt.var[i] <= var_floor() {
            d_var[i] = 0.0;
        }
    }
    let grads = target
        .iter()
        .map(|m| {
            let mut g = GaussianGrad::zeros(dim);
            for i in 0..dim {
                // mean(μ) and the spread term; the spread's dependence on the pooled mean cancels
                g.mu[i] = d_mean[i] / n + d_var[i] * 2.0 * (m.mu[i] - tgt.mean[i]) / n;
                g.log_sigma[i] = d_var[i] * 2.0 * (2.0 * m.log_sigma[i]).exp() / n;
            }
            g
        })
        .collect();
    Ok((loss, grads))
}
