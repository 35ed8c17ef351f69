//! Rotated-box IoU, greedy detection matching and 40-point interpolated AP.

use crate::error::{Error, Result};
use crate::geom::Box7;

/// Number of recall positions used by [`average_precision`].
pub const RECALL_POSITIONS: usize = 40;

const CLIP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IouMode {
    #[serde(rename = "bev")]
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc.abs()
}

/// Sutherland–Hodgman clip of `subject` against the convex CCW polygon `clip`.
pub(crate) fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= -CLIP_EPS;
            let prev_in = cross(a, b, prev) >= -CLIP_EPS;
            if cur_in {
                if !prev_in {
                    output.extend(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.extend(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let d1 = [q[0] - p[0], q[1] - p[1]];
    let d2 = [b[0] - a[0], b[1] - a[1]];
    let denom = d1[0] * d2[1] - d1[1] * d2[0];
    if denom.abs() < CLIP_EPS {
        return None;
    }
    let t = ((a[0] - p[0]) * d2[1] - (a[1] - p[1]) * d2[0]) / denom;
    Some([p[0] + t * d1[0], p[1] + t * d1[1]])
}

/// Area of the intersection of the two boxes' ground-plane rectangles.
pub fn bev_intersection_area(a: &Box7, b: &Box7) -> f64 {
    // Cheap rejection on circumscribed circles.
    let ra = 0.5 * a.l.hypot(a.w);
    let rb = 0.5 * b.l.hypot(b.w);
    if (a.cx - b.cx).hypot(a.cy - b.cy) > ra + rb {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()))
}

/// Bird's-eye-view IoU of the heading-rotated footprints.
pub fn bev_iou(a: &Box7, b: &Box7) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = a.l * a.w + b.l * b.w - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU: BEV intersection times vertical overlap.
pub fn iou_3d(a: &Box7, b: &Box7) -> f64 {
    let top = (a.cz + 0.5 * a.h).min(b.cz + 0.5 * b.h);
    let bottom = (a.cz - 0.5 * a.h).max(b.cz - 0.5 * b.h);
    let overlap = (top - bottom).max(0.0);
    if overlap == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * overlap;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou(a: &Box7, b: &Box7, mode: IouMode) -> f64 {
    match mode {
        IouMode::Bev => bev_iou(a, b),
        IouMode::ThreeD => iou_3d(a, b),
    }
}

/// Per-detection TP/FP flags in descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub is_tp: Vec<bool>,
    pub scores: Vec<f64>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.is_tp.iter().filter(|t| **t).count()
    }

    pub fn fp_count(&self) -> usize {
        self.is_tp.len() - self.tp_count()
    }

    /// Concatenates per-frame results and re-sorts by score. Ties keep frame order.
    pub fn merge(parts: &[MatchResult]) -> MatchResult {
        let mut rows: Vec<(f64, bool)> = parts
            .iter()
            .flat_map(|p| p.scores.iter().copied().zip(p.is_tp.iter().copied()))
            .collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        MatchResult {
            scores: rows.iter().map(|r| r.0).collect(),
            is_tp: rows.iter().map(|r| r.1).collect(),
            num_gt: parts.iter().map(|p| p.num_gt).sum(),
        }
    }
}

/// Greedy one-to-one matching: detections in descending score (ties by index)
/// claim the unmatched ground truth with the highest IoU at or above the threshold.
pub fn match_detections(
    dets: &[Box7],
    gts: &[Box7],
    iou_threshold: f64,
    mode: IouMode,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        let si = dets[i].score.unwrap_or(0.0);
        let sj = dets[j].score.unwrap_or(0.0);
        sj.total_cmp(&si).then(i.cmp(&j))
    });
    let mut claimed = vec![false; gts.len()];
    let mut is_tp = Vec::with_capacity(dets.len());
    let mut scores = Vec::with_capacity(dets.len());
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let v = iou(&dets[d], gt, mode);
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
        }
        is_tp.push(best.is_some());
        scores.push(dets[d].score.unwrap_or(0.0));
    }
    MatchResult {
        is_tp,
        scores,
        num_gt: gts.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub recall_positions: Vec<f64>,
    pub precision: Vec<f64>,
    pub ap: f64,
}

/// Average precision over the recall positions `i/40`, `i = 1..=40`, using
/// `p_interp(r) = max_{r' >= r} p(r')` (zero when `r` is never reached).
pub fn average_precision(m: &MatchResult) -> Result<PrCurve> {
    if m.num_gt == 0 {
        return Err(Error::UndefinedAp);
    }
    let n = m.is_tp.len();
    let mut tp_cum = Vec::with_capacity(n);
    let mut tp = 0usize;
    for &t in &m.is_tp {
        tp += usize::from(t);
        tp_cum.push(tp);
    }
    // Suffix maximum of precision so each lookup is O(1).
    let mut suffix_max = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        let p = tp_cum[k] as f64 / (k + 1) as f64;
        suffix_max[k] = suffix_max[k + 1].max(p);
    }
    let mut precision = Vec::with_capacity(RECALL_POSITIONS);
    let mut recall_positions = Vec::with_capacity(RECALL_POSITIONS);
    let mut sum = 0.0;
    for i in 1..=RECALL_POSITIONS {
        // first prefix whose recall tp/G reaches i/40, compared exactly in integers
        let first = tp_cum
            .partition_point(|&t| t * RECALL_POSITIONS < i * m.num_gt);
        let p = if first < n { suffix_max[first] } else { 0.0 };
        recall_positions.push(i as f64 / RECALL_POSITIONS as f64);
        precision.push(p);
        sum += p;
    }
    Ok(PrCurve {
        recall_positions,
        precision,
        ap: sum / RECALL_POSITIONS as f64,
    })
}
