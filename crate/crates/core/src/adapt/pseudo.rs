//! Confidence-filtered pseudo labels on unlabeled target frames.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::AdaptConfig;
use super::detector::{DetectorFrame, PreparedFrame};
use super::fusion::{kbf_fuse, KbfParams};
use super::tracking::{temporal_refine, tracks_to_frames};
use crate::error::{Error, Result};
use crate::geom::{Box7, Frame};
use crate::parallel;
use crate::synth::{ego_box_to_world, world_box_to_ego};
use crate::nnalign::checkpoint;
use crate::nnalign::model::AdaptModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the generating checkpoint.
    pub model_digest: String,
    pub score_threshold: f64,
    pub use_vpp: bool,
    pub channel_attention: bool,
    pub fused: bool,
    pub refined: bool,
}

/// Per-frame pseudo boxes in each frame's own ego coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub frames: Vec<Vec<Box7>>,
    pub provenance: Provenance,
}

impl PseudoLabelSet {
    pub fn empty(frames: usize, cfg: &AdaptConfig) -> Self {
        Self {
            frames: vec![Vec::new(); frames],
            provenance: Provenance {
                model_digest: String::new(),
                score_threshold: cfg.pseudo_score_threshold,
                use_vpp: cfg.use_vpp,
                channel_attention: cfg.use_gtd_residual,
                fused: false,
                refined: false,
            },
        }
    }

    pub fn total(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

pub fn model_digest(model: &AdaptModel) -> String {
    hex::encode(Sha256::digest(checkpoint::encode(model, "")))
}

/// Whether a box (ego coordinates of `frame`) lies in the detection range of
/// the re-leveled frame. Shared by pseudo labeling and evaluation so every
/// configuration is judged on the same region.
pub fn in_detection_range(frame: &Frame, b: &Box7, cfg: &AdaptConfig) -> bool {
    let d = DetectorFrame::level(frame, cfg.vehicle_height).to_detector(b);
    cfg.detection_range.contains([d.cx, d.cy, d.cz])
}

/// Raw detections of `model` on each frame (ego coordinates, scored).
pub fn detect_frames(model: &AdaptModel, frames: &[Frame], cfg: &AdaptConfig) -> Vec<Vec<Box7>> {
    parallel::map(frames, |f| {
        PreparedFrame::new(f, cfg.use_vpp, cfg).detect(model, cfg.use_gtd_residual, cfg)
    })
}

/// Detections kept when their score reaches the configured threshold and
/// their center is inside the detection range.
pub fn generate_pseudo_labels(model: &AdaptModel, target: &[Frame], cfg: &AdaptConfig) -> PseudoLabelSet {
    let mut set = PseudoLabelSet::empty(0, cfg);
    set.provenance.model_digest = model_digest(model);
    set.frames = detect_frames(model, target, cfg)
        .into_iter()
        .zip(target)
        .map(|(dets, f)| keep_valid(dets, f, cfg))
        .collect();
    set
}

/// Fuses pseudo labels produced by several models (e.g. successive
/// checkpoints) frame by frame.
pub fn fuse_pseudo_labels(sets: &[PseudoLabelSet], target: &[Frame], cfg: &AdaptConfig) -> Result<PseudoLabelSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::EmptyInput("no pseudo-label sets to fuse".into()))?;
    if sets.iter().any(|s| s.frames.len() != target.len()) {
        return Err(Error::InputMismatch("pseudo-label sets cover different frame counts".into()));
    }
    let params = KbfParams::from(&cfg.fusion);
    let mut out = PseudoLabelSet::empty(0, cfg);
    out.provenance = Provenance {
        model_digest: sets.iter().map(|s| s.provenance.model_digest.as_str()).collect::<Vec<_>>().join("+"),
        fused: true,
        ..first.provenance.clone()
    };
    for (i, frame) in target.iter().enumerate() {
        let ensemble: Vec<Vec<Box7>> = sets.iter().map(|s| s.frames[i].clone()).collect();
        let fused = kbf_fuse(&ensemble, &params)?;
        out.frames.push(keep_valid(fused, frame, cfg));
    }
    Ok(out)
}

/// Tracks pseudo labels through each sequence in world coordinates and fills
/// short gaps by interpolation. `sequences` are index ranges into `target`.
pub fn refine_pseudo_labels(
    set: &PseudoLabelSet,
    target: &[Frame],
    sequences: &[Range<usize>],
    cfg: &AdaptConfig,
) -> Result<PseudoLabelSet> {
    if set.frames.len() != target.len() {
        return Err(Error::InputMismatch("pseudo labels and frames differ in length".into()));
    }
    let mut out = set.clone();
    out.provenance.refined = true;
    for seq in sequences {
        let frames = &target[seq.clone()];
        let world: Vec<(f64, Vec<Box7>)> = frames
            .iter()
            .zip(&set.frames[seq.clone()])
            .map(|(f, boxes)| (f.timestamp, boxes.iter().map(|b| ego_box_to_world(b, &f.pose)).collect()))
            .collect();
        let tracks = temporal_refine(&world, cfg.fusion.max_gap)?;
        for (k, boxes) in tracks_to_frames(&tracks, frames.len()).into_iter().enumerate() {
            let f = &frames[k];
            let ego = boxes.iter().map(|b| world_box_to_ego(b, &f.pose)).collect();
            out.frames[seq.start + k] = keep_valid(ego, f, cfg);
        }
    }
    Ok(out)
}

fn keep_valid(boxes: Vec<Box7>, frame: &Frame, cfg: &AdaptConfig) -> Vec<Box7> {
    boxes
        .into_iter()
        .filter(|b| b.score.unwrap_or(0.0) >= cfg.pseudo_score_threshold && in_detection_range(frame, b, cfg))
        .collect()
}
