//! The desk-scale detector around [`AdaptModel`]: frame normalization,
//! voxel de-duplication, clustering-based candidate regions, target
//! assignment and inference.
//!
//! Everything here works in the *detector frame*: the ego frame (optionally
//! re-leveled by the virtual platform pose) shifted up by the sensor height so
//! that the ground sits near `z = 0`.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, Vector3};

use super::config::{AdaptConfig, DetectionRange, ProposalConfig};
use crate::geom::{Box7, Frame, JitterSample, ObjectClass, Platform, Point, VppTransform};
use crate::metrics::bev_iou;
use crate::nnalign::features::{global_inputs, region_inputs, RegionFrame};
use crate::nnalign::model::{AdaptModel, HEAD_OUTPUTS};
use crate::nnalign::params::sigmoid;
use crate::nnalign::step::{FrameSample, RegionSample, RegionTarget};
use crate::synth::PlatformProfile;

/// Nominal sensor height of a platform, used to put the ground near zero
/// when the frame is not re-leveled.
pub fn nominal_sensor_height(platform: Platform) -> f64 {
    PlatformProfile::for_platform(platform).nominal_height()
}

/// Ego frame to detector frame mapping for one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorFrame {
    vpp: Option<VppTransform>,
    offset: f64,
}

impl DetectorFrame {
    pub fn new(frame: &Frame, use_vpp: bool, vehicle_height: f64) -> Self {
        if use_vpp {
            Self {
                vpp: Some(VppTransform::new(&frame.pose, vehicle_height)),
                offset: vehicle_height,
            }
        } else {
            Self {
                vpp: None,
                offset: nominal_sensor_height(frame.platform),
            }
        }
    }

    /// Re-leveled frame used for evaluation and range filtering, independent
    /// of the configuration being evaluated.
    pub fn level(frame: &Frame, vehicle_height: f64) -> Self {
        Self::new(frame, true, vehicle_height)
    }

    pub fn point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let q = match &self.vpp {
            Some(t) => t.forward(p),
            None => *p,
        };
        q + Vector3::new(0.0, 0.0, self.offset)
    }

    pub fn to_detector(&self, b: &Box7) -> Box7 {
        let mut out = match &self.vpp {
            Some(t) => t.forward_box(b),
            None => *b,
        };
        out.cz += self.offset;
        out
    }

    pub fn to_ego(&self, b: &Box7) -> Box7 {
        let mut out = *b;
        out.cz -= self.offset;
        match &self.vpp {
            Some(t) => t.inverse_box(&out),
            None => out,
        }
    }
}

/// Transforms, crops and voxel de-duplicates a cloud. Each occupied voxel
/// keeps its lexicographically smallest point; output is ordered by voxel,
/// so the result does not depend on input order or duplicated points.
pub fn prepare_points(points: &[Point], view: &DetectorFrame, range: &DetectionRange, voxel: [f64; 3]) -> Vec<Point> {
    let mut keyed: Vec<([i64; 3], Point)> = points
        .iter()
        .filter_map(|p| {
            let q = view.point(&p.xyz());
            if !range.contains([q.x, q.y, q.z]) {
                return None;
            }
            let key = [
                (q.x / voxel[0]).floor() as i64,
                (q.y / voxel[1]).floor() as i64,
                (q.z / voxel[2]).floor() as i64,
            ];
            Some((key, Point::new(q.x, q.y, q.z, p.intensity)))
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let pa = [a.1.x, a.1.y, a.1.z, a.1.intensity];
            let pb = [b.1.x, b.1.y, b.1.z, b.1.intensity];
            pa.iter()
                .zip(&pb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Ground plane `z = a·x + b·y + c`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GroundPlane {
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

fn fit_plane(pts: &[[f64; 3]]) -> Option<GroundPlane> {
    if pts.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in pts {
        let r = Vector3::new(p[0], p[1], 1.0);
        ata += r * r.transpose();
        atb += r * p[2];
    }
    let s = ata.try_inverse()? * atb;
    s.iter().all(|v| v.is_finite()).then_some(GroundPlane { a: s[0], b: s[1], c: s[2] })
}

/// Least-squares plane through per-cell lowest points, refit with shrinking
/// inlier bands. Falls back to `z = 0` when too little ground is visible.
pub fn fit_ground(points: &[Point], cell: f64) -> GroundPlane {
    let mut lowest: BTreeMap<(i64, i64), [f64; 3]> = BTreeMap::new();
    for p in points {
        let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let e = lowest.entry(key).or_insert([p.x, p.y, p.z]);
        if p.z < e[2] {
            *e = [p.x, p.y, p.z];
        }
    }
    let cells: Vec<[f64; 3]> = lowest.into_values().collect();
    let Some(mut plane) = fit_plane(&cells) else {
        return GroundPlane::default();
    };
    for band in [1.0, 0.5, 0.25] {
        let inliers: Vec<[f64; 3]> = cells
            .iter()
            .filter(|p| (p[2] - plane.height_at(p[0], p[1])).abs() < band)
            .copied()
            .collect();
        match fit_plane(&inliers) {
            Some(p) => plane = p,
            None => break,
        }
    }
    plane
}

/// Minimum-area rectangle over a 3° heading sweep; returns (center, long, short, heading).
fn min_area_rect(xy: &[[f64; 2]]) -> ([f64; 2], f64, f64, f64) {
    let mut best = ([0.0, 0.0], 0.0, 0.0, 0.0);
    let mut best_area = f64::INFINITY;
    for step in 0..30 {
        let t = (step as f64 * 3.0).to_radians();
        let (s, c) = t.sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in xy {
            let u = p[0] * c + p[1] * s;
            let v = -p[0] * s + p[1] * c;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let area = (u1 - u0) * (v1 - v0);
        if area < best_area - 1e-12 {
            best_area = area;
            let (uc, vc) = (0.5 * (u0 + u1), 0.5 * (v0 + v1));
            let center = [uc * c - vc * s, uc * s + vc * c];
            let (du, dv) = (u1 - u0, v1 - v0);
            best = if du >= dv {
                (center, du, dv, t)
            } else {
                (center, dv, du, t + std::f64::consts::FRAC_PI_2)
            };
        }
    }
    best
}

/// Candidate regions: 8-connected clusters of above-ground points on a BEV
/// grid, each turned into an anchor of the configured size placed on the
/// cluster's minimum-area rectangle. The fitted ground only separates object
/// points; anchor heights assume the nominal ground `z = 0`.
pub fn propose(points: &[Point], cfg: &ProposalConfig) -> Vec<Box7> {
    let ground = fit_ground(points, cfg.ground_cell);
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let h = p.z - ground.height_at(p.x, p.y);
        if h > cfg.min_height && h < cfg.max_height {
            let key = ((p.x / cfg.cluster_cell).floor() as i64, (p.y / cfg.cluster_cell).floor() as i64);
            cells.entry(key).or_default().push(i);
        }
    }
    let mut seen: BTreeMap<(i64, i64), bool> = cells.keys().map(|k| (*k, false)).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in cells.keys() {
        if seen[start] {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = VecDeque::from([*start]);
        seen.insert(*start, true);
        while let Some(k) = queue.pop_front() {
            members.extend_from_slice(&cells[&k]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let n = (k.0 + dx, k.1 + dy);
                    if let Some(s) = seen.get_mut(&n) {
                        if !*s {
                            *s = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        if members.len() >= cfg.min_points {
            members.sort_unstable();
            clusters.push(members);
        }
    }
    // most populated first; ties keep grid order
    clusters.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let [l, w, h] = cfg.anchor_dims;
    let mut anchors = Vec::new();
    for c in clusters {
        let xy: Vec<[f64; 2]> = c.iter().map(|&i| [points[i].x, points[i].y]).collect();
        let (center, long, _, heading) = min_area_rect(&xy);
        if long > cfg.max_extent {
            continue;
        }
        // anchors sit on the nominal ground z = 0, like fixed-height anchors
        let cz = 0.5 * h;
        anchors.push(Box7::new([center[0], center[1], cz], [l, w, h], heading, ObjectClass::Vehicle));
        if anchors.len() == cfg.max_regions {
            break;
        }
    }
    anchors
}

/// A frame moved into the detector frame with its candidate regions.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub view: DetectorFrame,
    pub points: Vec<Point>,
    pub anchors: Vec<Box7>,
    pub regions: Vec<RegionFrame>,
}

impl PreparedFrame {
    pub fn new(frame: &Frame, use_vpp: bool, cfg: &AdaptConfig) -> Self {
        let view = DetectorFrame::new(frame, use_vpp, cfg.vehicle_height);
        let points = prepare_points(&frame.points, &view, &cfg.detection_range, cfg.voxel_size);
        let anchors = propose(&points, &cfg.proposals);
        let regions = anchors.iter().map(RegionFrame::new).collect();
        Self {
            view,
            points,
            anchors,
            regions,
        }
    }

    /// Training sample with targets assigned from `labels` (ego frame; only
    /// vehicles are used).
    pub fn sample(&self, labels: &[Box7], jitter: Option<JitterSample>, cfg: &ProposalConfig) -> FrameSample {
        let gts: Vec<Box7> = labels
            .iter()
            .filter(|b| b.class == ObjectClass::Vehicle)
            .map(|b| self.view.to_detector(b))
            .collect();
        let regions = self
            .regions
            .iter()
            .map(|rf| {
                let best = gts
                    .iter()
                    .map(|g| (bev_iou(&rf.anchor, g), g))
                    .fold(None::<(f64, &Box7)>, |acc, (iou, g)| match acc {
                        Some((bi, _)) if bi >= iou => acc,
                        _ => Some((iou, g)),
                    });
                let (iou, gt) = match best {
                    Some((iou, g)) => (iou, Some(g)),
                    None => (0.0, None),
                };
                let fg = iou >= cfg.fg_iou;
                RegionSample {
                    inputs: region_inputs(&self.points, rf),
                    target: RegionTarget {
                        objectness: if fg { 1.0 } else { 0.0 },
                        residual: gt.filter(|_| fg).map(|g| rf.encode(g)),
                        roi_label: if iou >= cfg.roi_iou { 1.0 } else { 0.0 },
                    },
                }
            })
            .collect();
        FrameSample {
            global: global_inputs(&self.points),
            regions,
            jitter,
        }
    }

    /// Scored vehicle boxes in the ego frame after BEV non-maximum suppression.
    /// With `roi_rescoring` and a trained RoI classifier the score is the geometric mean of the
    /// objectness and the RoI foreground probability of the region's mean latent.
    pub fn detect(&self, model: &AdaptModel, channel_attention: bool, cfg: &AdaptConfig) -> Vec<Box7> {
        if self.regions.is_empty() {
            return Vec::new();
        }
        let residual = channel_attention.then(|| {
            let fb = model.encode_pooled(&global_inputs(&self.points)).value;
            let (desc, _) = model.gtd_predict(&fb);
            model.ca_forward(&desc).0
        });
        // a trained RoI classifier also votes on the confidence
        let rescore = cfg.roi_rescoring && cfg.lambda_roi > 0.0;
        let mut dets: Vec<Box7> = self
            .regions
            .iter()
            .map(|rf| {
                let mut f = model.encode_pooled(&region_inputs(&self.points, rf)).value;
                if let Some(r) = &residual {
                    for (a, b) in f.iter_mut().zip(r) {
                        *a += b;
                    }
                }
                let (out, _): ([f64; HEAD_OUTPUTS], _) = model.head_forward(&f);
                let mut score = sigmoid(out[0]);
                if rescore {
                    let q = sigmoid(model.roi_logit(&model.pfa_encode(&f).mu));
                    score = (score * q).sqrt();
                }
                rf.decode(&out[1..]).with_score(score)
            })
            .filter(|b| b.is_valid() && cfg.detection_range.contains([b.cx, b.cy, b.cz]))
            .collect();
        dets = nms_bev(dets, cfg.proposals.nms_iou);
        dets.iter().map(|b| self.view.to_ego(b)).collect()
    }
}

/// Roll and pitch offsets predicted by the jitter descriptor for a frame seen
/// as-is, without virtual-pose leveling.
pub fn estimate_jitter(model: &AdaptModel, frame: &Frame, cfg: &AdaptConfig) -> JitterSample {
    let view = DetectorFrame::new(frame, false, cfg.vehicle_height);
    let points = prepare_points(&frame.points, &view, &cfg.detection_range, cfg.voxel_size);
    let fb = model.encode_pooled(&global_inputs(&points)).value;
    model.gtd_predict(&fb).1
}

/// Greedy BEV non-maximum suppression; stable for equal scores.
pub fn nms_bev(mut boxes: Vec<Box7>, iou_threshold: f64) -> Vec<Box7> {
    boxes.sort_by(|a, b| b.score.unwrap_or(0.0).total_cmp(&a.score.unwrap_or(0.0)));
    let mut kept: Vec<Box7> = Vec::new();
    for b in boxes {
        if kept.iter().all(|k| bev_iou(k, &b) <= iou_threshold) {
            kept.push(b);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;

    fn frame_with(points: Vec<Point>, pose: Pose) -> Frame {
        Frame {
            platform: Platform::Vehicle,
            timestamp: 0.0,
            points,
            boxes: vec![],
            pose,
        }
    }

    #[test]
    fn voxel_dedupe_is_order_and_duplicate_invariant() {
        let pts: Vec<Point> = (0..200)
            .map(|i| {
                let t = i as f64;
                Point::new((t * 0.37).sin() * 5.0, (t * 0.11).cos() * 5.0, (t * 0.05).sin(), 0.5)
            })
            .collect();
        let view = DetectorFrame::new(&frame_with(vec![], Pose::default()), false, 1.7);
        let range = DetectionRange::default();
        let a = prepare_points(&pts, &view, &range, [0.1, 0.1, 0.15]);
        let mut more = pts.clone();
        more.reverse();
        more.extend(pts.iter().copied());
        let b = prepare_points(&more, &view, &range, [0.1, 0.1, 0.15]);
        assert_eq!(a, b);
        assert!(a.len() <= pts.len());
    }

    #[test]
    fn ground_fit_recovers_tilted_plane() {
        let mut pts = Vec::new();
        for i in -20..20 {
            for j in -20..20 {
                let (x, y) = (i as f64 * 0.9, j as f64 * 0.9);
                pts.push(Point::new(x, y, 0.1 * x - 0.05 * y + 0.3, 0.0));
            }
        }
        // a box-shaped object on top
        for k in 0..50 {
            let t = k as f64 * 0.1;
            pts.push(Point::new(5.0 + t * 0.1, 5.0, 0.1 * 5.0 - 0.25 + 0.3 + 1.5, 0.0));
        }
        let g = fit_ground(&pts, 2.0);
        assert!((g.a - 0.1).abs() < 1e-6 && (g.b + 0.05).abs() < 1e-6 && (g.c - 0.3).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn proposals_find_a_box() {
        let mut pts = Vec::new();
        for i in -30..30 {
            for j in -30..30 {
                pts.push(Point::new(i as f64 * 0.8, j as f64 * 0.8, 0.0, 0.0));
            }
        }
        let b = Box7::new([10.0, 4.0, 0.85], [4.5, 1.9, 1.7], 0.5, ObjectClass::Vehicle);
        for a in 0..20 {
            for k in 0..8 {
                let q = Vector3::new(-2.25 + a as f64 * 0.225, -0.95, 0.1 + k as f64 * 0.2 - 0.85);
                let w = b.from_local(&q);
                pts.push(Point::new(w.x, w.y, w.z, 0.0));
                let q2 = Vector3::new(2.25, -0.95 + (a % 10) as f64 * 0.19, q.z);
                let w2 = b.from_local(&q2);
                pts.push(Point::new(w2.x, w2.y, w2.z, 0.0));
            }
        }
        let anchors = propose(&pts, &ProposalConfig::default());
        assert_eq!(anchors.len(), 1, "{anchors:?}");
        assert!(bev_iou(&anchors[0], &b) > 0.5, "{:?}", anchors[0]);
    }

    #[test]
    fn detector_frame_round_trip() {
        let pose = Pose::new(0.1, -0.2, 0.7, [3.0, 1.0, 6.0]);
        let mut f = frame_with(vec![], pose);
        f.platform = Platform::Drone;
        let b = Box7::new([12.0, -3.0, -5.0], [4.5, 1.9, 1.7], 0.4, ObjectClass::Vehicle);
        for vpp in [false, true] {
            let v = DetectorFrame::new(&f, vpp, 1.7);
            let back = v.to_ego(&v.to_detector(&b));
            assert!((back.center() - b.center()).norm() < 1e-9);
            assert!((back.heading - b.heading).abs() < 1e-12);
        }
    }

    #[test]
    fn nms_keeps_best() {
        let a = Box7::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0, ObjectClass::Vehicle).with_score(0.9);
        let b = Box7::new([0.3, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0, ObjectClass::Vehicle).with_score(0.95);
        let c = Box7::new([10.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0, ObjectClass::Vehicle).with_score(0.5);
        let kept = nms_bev(vec![a, b, c], 0.1);
        assert_eq!(kept, vec![b, c]);
    }
}
