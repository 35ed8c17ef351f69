//! Average-precision reports over frame sets.

use serde::{Deserialize, Serialize};

use super::config::AdaptConfig;
use super::pseudo::{detect_frames, in_detection_range};
use crate::error::{Error, Result};
use crate::geom::{Box7, Frame, ObjectClass};
use crate::metrics::{average_precision, match_detections, IouMode, MatchResult};
use crate::nnalign::model::AdaptModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApEntry {
    pub class: ObjectClass,
    pub mode: IouMode,
    pub iou_threshold: f64,
    /// `None` when there is no ground truth of the class.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_det: usize,
    pub true_positives: usize,
}

impl std::fmt::Display for ApEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            IouMode::Bev => "bev",
            IouMode::ThreeD => "3d",
        };
        let ap = self.ap.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        write!(
            f,
            "{:<10} {mode:<3} @{:.2}  AP {ap}  (gt {}, det {}, tp {})",
            self.class.name(),
            self.iou_threshold,
            self.num_gt,
            self.num_det,
            self.true_positives
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub entries: Vec<ApEntry>,
}

impl EvalReport {
    pub fn get(&self, class: ObjectClass, mode: IouMode, iou_threshold: f64) -> Option<&ApEntry> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.mode == mode && e.iou_threshold == iou_threshold)
    }

    /// Vehicle AP in 3D at 0.5, the headline number of the adaptation runs.
    pub fn vehicle_ap_3d_05(&self) -> f64 {
        self.get(ObjectClass::Vehicle, IouMode::ThreeD, 0.5)
            .and_then(|e| e.ap)
            .unwrap_or(0.0)
    }
}

/// Thresholds reported per class: the class default plus 0.5 for vehicles.
pub fn report_thresholds(class: ObjectClass) -> Vec<f64> {
    match class {
        ObjectClass::Vehicle => vec![0.7, 0.5],
        ObjectClass::Pedestrian => vec![0.5],
    }
}

/// Matches `dets[i]` against `gts[i]` for one class and threshold and
/// accumulates a single PR curve over all frames.
pub fn ap_entry(dets: &[Vec<Box7>], gts: &[Vec<Box7>], class: ObjectClass, mode: IouMode, thr: f64) -> Result<ApEntry> {
    if dets.len() != gts.len() {
        return Err(Error::InputMismatch(format!(
            "{} detection frames vs {} ground-truth frames",
            dets.len(),
            gts.len()
        )));
    }
    let parts: Vec<MatchResult> = dets
        .iter()
        .zip(gts)
        .map(|(d, g)| {
            let d: Vec<Box7> = d.iter().filter(|b| b.class == class).copied().collect();
            let g: Vec<Box7> = g.iter().filter(|b| b.class == class).copied().collect();
            match_detections(&d, &g, thr, mode)
        })
        .collect();
    let m = MatchResult::merge(&parts);
    let ap = match average_precision(&m) {
        Ok(c) => Some(c.ap),
        Err(Error::UndefinedAp) => None,
        Err(e) => return Err(e),
    };
    Ok(ApEntry {
        class,
        mode,
        iou_threshold: thr,
        ap,
        num_gt: m.num_gt,
        num_det: m.is_tp.len(),
        true_positives: m.tp_count(),
    })
}

/// Per-class BEV and 3D AP at the report thresholds.
pub fn evaluate_boxes(dets: &[Vec<Box7>], gts: &[Vec<Box7>], classes: &[ObjectClass]) -> Result<EvalReport> {
    let mut entries = Vec::new();
    for &class in classes {
        for thr in report_thresholds(class) {
            for mode in [IouMode::Bev, IouMode::ThreeD] {
                entries.push(ap_entry(dets, gts, class, mode, thr)?);
            }
        }
    }
    Ok(EvalReport { entries })
}

/// Runs the detector on labeled frames and reports vehicle AP, with both
/// detections and ground truth restricted to the detection range.
pub fn evaluate_model(model: &AdaptModel, frames: &[Frame], cfg: &AdaptConfig) -> Result<EvalReport> {
    let dets = detect_frames(model, frames, cfg);
    let filter = |f: &Frame, boxes: &[Box7]| -> Vec<Box7> {
        boxes.iter().filter(|b| in_detection_range(f, b, cfg)).copied().collect()
    };
    let dets: Vec<Vec<Box7>> = frames.iter().zip(&dets).map(|(f, d)| filter(f, d)).collect();
    let gts: Vec<Vec<Box7>> = frames.iter().map(|f| filter(f, &f.boxes)).collect();
    evaluate_boxes(&dets, &gts, &[ObjectClass::Vehicle])
}
