//! One forward/backward pass over a frame: detection loss on candidate
//! regions plus the optional rotation, RoI-classification and KL terms.

use super::features::PointInput;
use super::losses::{
    batch_kl_against, bce_with_logit, reparameterize, rotation_loss, smooth_l1, BatchGaussian,
    GaussianGrad, GaussianParams,
};
use super::model::{AdaptModel, HEAD_OUTPUTS};
use crate::error::{Error, Result};
use crate::geom::JitterSample;

pub const SMOOTH_L1_BETA: f64 = 1.0 / 9.0;

/// Supervision for one candidate region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTarget {
    /// Objectness label in `[0, 1]`.
    pub objectness: f64,
    /// Regression target; `None` for background regions.
    pub residual: Option<[f64; 7]>,
    /// Foreground flag `g` for the RoI classifier.
    pub roi_label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub inputs: Vec<PointInput>,
    pub target: RegionTarget,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSample {
    pub global: Vec<PointInput>,
    pub regions: Vec<RegionSample>,
    /// Applied jitter, when the frame was augmented.
    pub jitter: Option<JitterSample>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions<'a> {
    pub lambda_rot: f64,
    pub lambda_roi: f64,
    pub lambda_kl: f64,
    /// Add the descriptor residual to the region features.
    pub channel_attention: bool,
    /// Source batch to align against; enables the KL term when `lambda_kl > 0`.
    pub kl_reference: Option<&'a BatchGaussian>,
    /// Skip the detection loss (target frames without pseudo labels).
    pub skip_detection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub rot: f64,
    pub roi: f64,
    pub kl: f64,
}

impl LossBreakdown {
    pub fn det(&self) -> f64 {
        self.cls + self.reg
    }

    /// Weighted sum matching the gradient returned with it.
    pub fn total(&self, opts: &StepOptions) -> f64 {
        self.det() + opts.lambda_rot * self.rot + opts.lambda_roi * self.roi + opts.lambda_kl * self.kl
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub losses: LossBreakdown,
    pub total: f64,
    pub grads: Vec<f64>,
    /// Per-region Gaussians (present when either probabilistic term ran).
    pub gaussians: Vec<GaussianParams>,
}

/// Mean BCE over regions plus smooth-L1 over foreground residuals, with
/// gradients with respect to each head output.
pub fn detection_loss(
    predictions: &[[f64; HEAD_OUTPUTS]],
    targets: &[RegionTarget],
) -> Result<(f64, f64, Vec<[f64; HEAD_OUTPUTS]>)> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut grads = vec![[0.0; HEAD_OUTPUTS]; predictions.len()];
    if predictions.is_empty() {
        return Ok((0.0, 0.0, grads));
    }
    let n = predictions.len() as f64;
    let n_fg = targets.iter().filter(|t| t.residual.is_some()).count().max(1) as f64;
    let (mut cls, mut reg) = (0.0, 0.0);
    for ((p, t), g) in predictions.iter().zip(targets).zip(&mut grads) {
        let (l, d) = bce_with_logit(p[0], t.objectness);
        cls += l / n;
        g[0] = d / n;
        if let Some(r) = &t.residual {
            for k in 0..7 {
                let (l, d) = smooth_l1(p[k + 1] - r[k], SMOOTH_L1_BETA);
                reg += l / n_fg;
                g[k + 1] = d / n_fg;
            }
        }
    }
    Ok((cls, reg, grads))
}

/// Forward and backward pass. `noise[k]` is the reparameterization noise for
/// region `k` and is only read when the RoI term is active.
pub fn forward_backward(
    model: &AdaptModel,
    sample: &FrameSample,
    noise: &[Vec<f64>],
    opts: &StepOptions,
) -> Result<StepResult> {
    let d = model.dims.feature;
    let mut g = model.params.zeros_like();
    let mut losses = LossBreakdown::default();

    let rot_active = opts.lambda_rot > 0.0 && sample.jitter.is_some();
    let roi_active = opts.lambda_roi > 0.0 && !sample.regions.is_empty();
    let kl_active =
        opts.lambda_kl > 0.0 && opts.kl_reference.is_some() && !sample.regions.is_empty();
    let need_global = rot_active || opts.channel_attention;
    if roi_active && noise.len() < sample.regions.len() {
        return Err(Error::InvalidArgument("missing reparameterization noise".into()));
    }

    let pooled: Vec<_> = sample
        .regions
        .iter()
        .map(|r| model.encode_pooled(&r.inputs))
        .collect();
    let mut feats: Vec<Vec<f64>> = pooled.iter().map(|x| x.value.clone()).collect();

    let global = need_global.then(|| {
        let pooled = model.encode_pooled(&sample.global);
        let (desc, jitter, cache) = model.gtd_forward(&pooled.value);
        (pooled, desc, jitter, cache)
    });
    let ca = match (&global, opts.channel_attention) {
        (Some((_, desc, _, _)), true) => {
            let (res, cache) = model.ca_forward(desc);
            for f in &mut feats {
                for (a, b) in f.iter_mut().zip(&res) {
                    *a += b;
                }
            }
            Some(cache)
        }
        _ => None,
    };

    let mut d_feats = vec![vec![0.0; d]; feats.len()];

    if !opts.skip_detection && !feats.is_empty() {
        let (outs, caches): (Vec<_>, Vec<_>) = feats.iter().map(|f| model.head_forward(f)).unzip();
        let targets: Vec<_> = sample.regions.iter().map(|r| r.target.clone()).collect();
        let (cls, reg, d_out) = detection_loss(&outs, &targets)?;
        losses.cls = cls;
        losses.reg = reg;
        for ((c, dy), df) in caches.iter().zip(&d_out).zip(&mut d_feats) {
            model.head_backward(c, dy, &mut g, df);
        }
    }

    let mut gaussians = Vec::new();
    if roi_active || kl_active {
        let (gs, caches): (Vec<_>, Vec<_>) = feats.iter().map(|f| model.pfa_forward(f)).unzip();
        let mut grads: Vec<GaussianGrad> = vec![GaussianGrad::zeros(d); gs.len()];
        if roi_active {
            let n = gs.len() as f64;
            let mut d_xi = vec![0.0; d];
            for (k, (gp, r)) in gs.iter().zip(&sample.regions).enumerate() {
                let xi = reparameterize(gp, &noise[k])?;
                let (l, dl) = bce_with_logit(model.roi_logit(&xi), r.target.roi_label);
                losses.roi += l / n;
                let scale = opts.lambda_roi / n;
                model.roi_backward(&xi, dl * scale, &mut g, &mut d_xi);
                for i in 0..d {
                    let s = gp.log_sigma[i].exp();
                    grads[k].mu[i] += d_xi[i];
                    grads[k].log_sigma[i] += d_xi[i] * s * noise[k][i];
                }
            }
        }
        if let (true, Some(reference)) = (kl_active, opts.kl_reference) {
            let (kl, kg) = batch_kl_against(reference, &gs)?;
            losses.kl = kl;
            for (acc, gk) in grads.iter_mut().zip(&kg) {
                for i in 0..d {
                    acc.mu[i] += opts.lambda_kl * gk.mu[i];
                    acc.log_sigma[i] += opts.lambda_kl * gk.log_sigma[i];
                }
            }
        }
        let mut tmp = vec![0.0; d];
        for ((c, gr), df) in caches.iter().zip(&grads).zip(&mut d_feats) {
            model.pfa_backward(c, gr, &mut g, &mut tmp);
            for (a, b) in df.iter_mut().zip(&tmp) {
                *a += b;
            }
        }
        gaussians = gs;
    }

    for ((r, pl), df) in sample.regions.iter().zip(&pooled).zip(&d_feats) {
        model.backward_pooled(&r.inputs, pl, df, &mut g);
    }

    if let Some((gpool, _, pred, gcache)) = &global {
        let mut d_desc = vec![0.0; model.dims.descriptor];
        if let Some(cache) = &ca {
            let mut d_res = vec![0.0; d];
            for df in &d_feats {
                for (a, b) in d_res.iter_mut().zip(df) {
                    *a += b;
                }
            }
            model.ca_backward(cache, &d_res, &mut g, &mut d_desc);
        }
        let mut d_jitter = [0.0; 2];
        if rot_active {
            let truth = sample.jitter.unwrap_or_default();
            let (l, dl) = rotation_loss(pred, &truth);
            losses.rot = l;
            d_jitter = [opts.lambda_rot * dl[0], opts.lambda_rot * dl[1]];
        }
        let mut d_global = vec![0.0; d];
        model.gtd_backward(gcache, d_jitter, &d_desc, &mut g, &mut d_global);
        model.backward_pooled(&sample.global, gpool, &d_global, &mut g);
    }

    let total = losses.total(opts);
    if !total.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok(StepResult {
        losses,
        total,
        grads: g,
        gaussians,
    })
}
