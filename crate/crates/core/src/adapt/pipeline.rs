//! End-to-end adaptation: pre-adaptation on the source platform, pseudo
//! labeling of the target training split, knowledge adaptation and held-out
//! evaluation.

use rand::Rng;

use super::config::AdaptConfig;
use super::eval::{evaluate_model, EvalReport};
use super::pseudo::{generate_pseudo_labels, PseudoLabelSet};
use super::train::{knowledge_adapt, pre_adapt, LossTrace};
use crate::error::Result;
use crate::geom::Frame;
use crate::nnalign::model::AdaptModel;

/// Result of one adaptation run.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: AdaptModel,
    pub trace: LossTrace,
    pub pseudo: PseudoLabelSet,
    /// Held-out target report of the pre-adapted model.
    pub pre_adapt_report: EvalReport,
    /// Held-out target report after knowledge adaptation.
    pub report: EvalReport,
}

/// Knowledge adaptation of an already pre-adapted model.
pub fn adapt_from<R: Rng + ?Sized>(
    pre: &AdaptModel,
    pre_trace: &LossTrace,
    source: &[Frame],
    target_train: &[Frame],
    target_test: &[Frame],
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<AdaptOutcome> {
    let pre_adapt_report = evaluate_model(pre, target_test, cfg)?;
    let pseudo = generate_pseudo_labels(pre, target_train, cfg);
    let (model, ka_trace) = knowledge_adapt(pre.clone(), source, target_train, &pseudo, cfg, rng)?;
    let mut trace = pre_trace.clone();
    trace.extend(&ka_trace);
    let report = evaluate_model(&model, target_test, cfg)?;
    Ok(AdaptOutcome {
        model,
        trace,
        pseudo,
        pre_adapt_report,
        report,
    })
}

/// Both stages from scratch.
pub fn run_adaptation<R: Rng + ?Sized>(
    source: &[Frame],
    target_train: &[Frame],
    target_test: &[Frame],
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<AdaptOutcome> {
    let (pre, trace) = pre_adapt(source, cfg, rng)?;
    adapt_from(&pre, &trace, source, target_train, target_test, cfg, rng)
}
