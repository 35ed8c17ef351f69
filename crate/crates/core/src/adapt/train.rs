//! Pre-adaptation and knowledge-adaptation training loops.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::AdaptConfig;
use super::detector::PreparedFrame;
use super::pseudo::PseudoLabelSet;
use crate::error::{Error, Result};
use crate::geom::{apply_rpj, random_object_scaling, sample_rpj, Frame, JitterSample};
use crate::nnalign::losses::{BatchGaussian, GaussianParams};
use crate::nnalign::model::AdaptModel;
use crate::nnalign::optim::Optimizer;
use crate::nnalign::step::{forward_backward, FrameSample, LossBreakdown, StepOptions, StepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Loss of the first source frame before any update.
    Init,
    PreAdapt,
    KaSource,
    KaTarget,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::PreAdapt => "pre_adapt",
            Stage::KaSource => "ka_source",
            Stage::KaTarget => "ka_target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub stage: Stage,
    pub losses: LossBreakdown,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub const CSV_HEADER: &'static str = "step,stage,cls,reg,rot,roi,kl,total";

    pub fn push(&mut self, stage: Stage, result: &StepResult) {
        self.records.push(LossRecord {
            step: self.records.len(),
            stage,
            losses: result.losses,
            total: result.total,
        });
    }

    pub fn extend(&mut self, other: &LossTrace) {
        for r in &other.records {
            self.records.push(LossRecord {
                step: self.records.len(),
                ..*r
            });
        }
    }

    /// Totals of the records of one stage.
    pub fn totals(&self, stage: Stage) -> Vec<f64> {
        self.records.iter().filter(|r| r.stage == stage).map(|r| r.total).collect()
    }

    /// Full-precision CSV (`{:e}` formatting round-trips every `f64`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let l = &r.losses;
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.step,
                r.stage.name(),
                l.cls,
                l.reg,
                l.rot,
                l.roi,
                l.kl,
                r.total
            ));
        }
        s
    }
}

/// Accumulates gradients over `batch_size` steps before one optimizer update.
struct Trainer {
    model: AdaptModel,
    opt: Optimizer,
    acc: Vec<f64>,
    pending: usize,
    batch: usize,
}

impl Trainer {
    fn new(model: AdaptModel, cfg: &AdaptConfig) -> Self {
        let n = model.num_params();
        Self {
            opt: Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.clip_norm, n),
            acc: vec![0.0; n],
            pending: 0,
            batch: cfg.batch_size.max(1),
            model,
        }
    }

    fn add(&mut self, grads: &[f64]) {
        for (a, g) in self.acc.iter_mut().zip(grads) {
            *a += g;
        }
        self.pending += 1;
        if self.pending == self.batch {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.pending == 0 {
            return;
        }
        let scale = 1.0 / self.pending as f64;
        for a in &mut self.acc {
            *a *= scale;
        }
        self.opt.step(&mut self.model.params.data, &self.acc);
        self.acc.fill(0.0);
        self.pending = 0;
    }

    fn finish(mut self) -> Result<AdaptModel> {
        self.flush();
        if !self.model.params.all_finite() {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        Ok(self.model)
    }
}

fn noise_for<R: Rng + ?Sized>(sample: &FrameSample, dim: usize, active: bool, rng: &mut R) -> Vec<Vec<f64>> {
    if !active {
        return Vec::new();
    }
    sample
        .regions
        .iter()
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Independent random streams of one training run. Each consumer draws from
/// its own stream, so switching one mechanism on or off leaves the draws of
/// the others untouched.
struct Streams {
    order: ChaCha8Rng,
    ros: ChaCha8Rng,
    rpj: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl Streams {
    fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut next = || ChaCha8Rng::seed_from_u64(rng.random());
        Self {
            order: next(),
            ros: next(),
            rpj: next(),
            noise: next(),
        }
    }
}

/// Source frame after the configured augmentations, with the applied jitter.
fn augment_source(frame: &Frame, cfg: &AdaptConfig, s: &mut Streams) -> Result<(Frame, Option<JitterSample>)> {
    let mut f = if cfg.use_ros {
        random_object_scaling(frame, (cfg.ros_range[0], cfg.ros_range[1]), &mut s.ros)?
    } else {
        frame.clone()
    };
    let mut jitter = None;
    if cfg.use_rpj {
        let j = sample_rpj(cfg.rpj_range, &mut s.rpj);
        f = apply_rpj(&f, &j)?;
        jitter = Some(j);
    }
    Ok((f, jitter))
}

fn source_step(
    model: &AdaptModel,
    frame: &Frame,
    cfg: &AdaptConfig,
    lambda_rot: f64,
    s: &mut Streams,
) -> Result<StepResult> {
    let (f, jitter) = augment_source(frame, cfg, s)?;
    let prep = PreparedFrame::new(&f, false, cfg);
    let sample = prep.sample(&f.boxes, jitter, &cfg.proposals);
    let noise = noise_for(&sample, cfg.model.feature, cfg.lambda_roi > 0.0, &mut s.noise);
    let opts = StepOptions {
        lambda_rot,
        lambda_roi: cfg.lambda_roi,
        ..StepOptions::default()
    };
    forward_backward(model, &sample, &noise, &opts)
}

/// Source-only training: jitter augmentation plus detection, rotation and
/// RoI-classification losses, one gradient step per `batch_size` frames.
pub fn pre_adapt<R: Rng + ?Sized>(source: &[Frame], cfg: &AdaptConfig, rng: &mut R) -> Result<(AdaptModel, LossTrace)> {
    let (model, trace, _) = pre_adapt_with_snapshots(source, cfg, 0, rng)?;
    Ok((model, trace))
}

/// [`pre_adapt`] that also returns copies of the model after each of the
/// last `keep` epochs (oldest first).
pub fn pre_adapt_with_snapshots<R: Rng + ?Sized>(
    source: &[Frame],
    cfg: &AdaptConfig,
    keep: usize,
    rng: &mut R,
) -> Result<(AdaptModel, LossTrace, Vec<AdaptModel>)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyInput("no source frames".into()));
    }
    let model = AdaptModel::new(cfg.model, rng.random());
    let mut trace = LossTrace::default();
    // separate stream so the probe does not shift the training randomness
    let mut probe = Streams::new(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1417));
    let init = source_step(&model, &source[0], cfg, cfg.lambda_rot, &mut probe)?;
    trace.push(Stage::Init, &init);
    let mut streams = Streams::new(rng);

    let mut trainer = Trainer::new(model, cfg);
    let mut snapshots = Vec::new();
    let mut order: Vec<usize> = (0..source.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut streams.order);
        for &i in &order {
            let r = source_step(&trainer.model, &source[i], cfg, cfg.lambda_rot, &mut streams)?;
            trace.push(Stage::PreAdapt, &r);
            trainer.add(&r.grads);
        }
        // a partial batch at the end of an epoch is applied, not carried over
        trainer.flush();
        if epoch + keep >= cfg.epochs {
            snapshots.push(trainer.model.clone());
        }
    }
    Ok((trainer.finish()?, trace, snapshots))
}

/// Joint training on labeled source frames and pseudo-labeled target frames
/// in strict source/target alternation. The KL term pulls the target RoI
/// distribution toward the batch Gaussian of the preceding source step.
pub fn knowledge_adapt<R: Rng + ?Sized>(
    model: AdaptModel,
    source: &[Frame],
    target: &[Frame],
    pseudo: &PseudoLabelSet,
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<(AdaptModel, LossTrace)> {
    cfg.validate()?;
    if pseudo.frames.len() != target.len() {
        return Err(Error::Precondition(format!(
            "{} pseudo-label frames for {} target frames",
            pseudo.frames.len(),
            target.len()
        )));
    }
    if source.is_empty() && target.is_empty() {
        return Err(Error::EmptyInput("no frames to adapt on".into()));
    }
    let mut trace = LossTrace::default();
    let mut trainer = Trainer::new(model, cfg);
    let mut streams = Streams::new(rng);
    let mut s_order: Vec<usize> = (0..source.len()).collect();
    let mut t_order: Vec<usize> = (0..target.len()).collect();
    let pairs = source.len().max(target.len());
    let need_batch = cfg.lambda_kl > 0.0;
    for _ in 0..cfg.ka_epochs() {
        s_order.shuffle(&mut streams.order);
        t_order.shuffle(&mut streams.order);
        for k in 0..pairs {
            let mut reference = None;
            if !source.is_empty() {
                let frame = &source[s_order[k % source.len()]];
                let (f, jitter) = augment_source(frame, cfg, &mut streams)?;
                let prep = PreparedFrame::new(&f, false, cfg);
                let sample = prep.sample(&f.boxes, jitter, &cfg.proposals);
                let noise = noise_for(&sample, cfg.model.feature, cfg.lambda_roi > 0.0, &mut streams.noise);
                let opts = StepOptions {
                    lambda_roi: cfg.lambda_roi,
                    ..StepOptions::default()
                };
                let r = forward_backward(&trainer.model, &sample, &noise, &opts)?;
                if need_batch && !sample.regions.is_empty() {
                    let members: Vec<GaussianParams> = if r.gaussians.is_empty() {
                        sample
                            .regions
                            .iter()
                            .map(|s| trainer.model.pfa_encode(&trainer.model.encode_pooled(&s.inputs).value))
                            .collect()
                    } else {
                        r.gaussians.clone()
                    };
                    reference = Some(BatchGaussian::from_members(&members)?);
                }
                trace.push(Stage::KaSource, &r);
                trainer.add(&r.grads);
            }
            if !target.is_empty() {
                let i = t_order[k % target.len()];
                let prep = PreparedFrame::new(&target[i], cfg.use_vpp, cfg);
                let sample = prep.sample(&pseudo.frames[i], None, &cfg.proposals);
                let opts = StepOptions {
                    lambda_kl: cfg.lambda_kl,
                    kl_reference: reference.as_ref(),
                    channel_attention: cfg.use_gtd_residual,
                    ..StepOptions::default()
                };
                let r = forward_backward(&trainer.model, &sample, &[], &opts)?;
                trace.push(Stage::KaTarget, &r);
                trainer.add(&r.grads);
            }
        }
    }
    Ok((trainer.finish()?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, PlatformProfile, SceneSpec};

    fn tiny_config() -> AdaptConfig {
        let mut c = AdaptConfig::default();
        c.model.hidden = 16;
        c.model.feature = 8;
        c.model.descriptor = 8;
        c.model.head_hidden = 8;
        c.epochs = 1;
        c
    }

    fn frames(n: usize) -> Vec<Frame> {
        let mut p = PlatformProfile::vehicle();
        p.points_per_frame = 600;
        generate_dataset(&SceneSpec::default(), &p, 1, n, 3).unwrap()
    }

    #[test]
    fn zero_epochs_is_the_initial_model() {
        let mut c = tiny_config();
        c.epochs = 0;
        let src = frames(2);
        let (m, trace) = pre_adapt(&src, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let fresh = AdaptModel::new(c.model, ChaCha8Rng::seed_from_u64(1).random());
        assert_eq!(m, fresh);
        assert_eq!(trace.records.len(), 1);
        assert!(trace.records[0].total.is_finite());
        assert!(pre_adapt(&[], &c, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let c = tiny_config();
        let src = frames(3);
        let run = || pre_adapt(&src, &c, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta.to_csv(), tb.to_csv());
        assert_eq!(ta.records.len(), 4);
    }

    #[test]
    fn ka_requires_matching_pseudo_labels() {
        let c = tiny_config();
        let src = frames(2);
        let m = AdaptModel::new(c.model, 0);
        let pseudo = PseudoLabelSet::empty(1, &c);
        let err = knowledge_adapt(m, &src, &src, &pseudo, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
