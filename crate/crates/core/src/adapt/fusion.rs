//! Kernel-density box fusion across an ensemble of detectors.

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Box7};
use crate::metrics::bev_iou;

/// Fusion settings; defaults match [`super::config::FusionConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbfParams {
    /// Kernel bandwidth for (cx, cy, cz, l, w, h, heading).
    pub bandwidth: [f64; 7],
    pub min_support: usize,
    pub cluster_iou: f64,
    pub grid_points: usize,
}

impl From<&super::config::FusionConfig> for KbfParams {
    fn from(c: &super::config::FusionConfig) -> Self {
        Self {
            bandwidth: c.bandwidth,
            min_support: c.min_support,
            cluster_iou: c.cluster_iou,
            grid_points: c.grid_points,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Mode of a Gaussian mixture centered at `values`: grid argmax over
/// `[min - 2h, max + 2h]`, then mean-shift to the local maximum. The result is
/// clamped to `[min, max]`, where the mixture's mode always lies.
pub fn kde_mode_1d(values: &[f64], h: f64, grid: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = |x: f64, v: f64| (-(x - v).powi(2) / (2.0 * h * h)).exp();
    let start = mode_on_grid(lo, hi, h, grid, |x| values.iter().map(|v| weight(x, *v)).sum());
    let x = mean_shift(start, |x| {
        let (num, den) = values
            .iter()
            .fold((0.0, 0.0), |(n, d), v| (n + weight(x, *v) * v, d + weight(x, *v)));
        num / den
    });
    x.clamp(lo, hi)
}

const MEAN_SHIFT_ITERS: usize = 200;
const MEAN_SHIFT_TOL: f64 = 1e-12;

fn mean_shift(mut x: f64, step: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..MEAN_SHIFT_ITERS {
        let next = step(x);
        if !next.is_finite() {
            break;
        }
        let done = (next - x).abs() <= MEAN_SHIFT_TOL;
        x = next;
        if done {
            break;
        }
    }
    x
}

fn mode_on_grid(lo: f64, hi: f64, h: f64, grid: usize, density: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (lo - 2.0 * h, hi + 2.0 * h);
    let n = grid.max(2);
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 0..n {
        let x = a + (b - a) * i as f64 / (n - 1) as f64;
        let d = density(x);
        if d > best.0 {
            best = (d, x);
        }
    }
    best.1.clamp(lo, hi)
}

/// Heading mode on the circle: members are embedded as `(cos, sin)` and the
/// kernel uses the chord distance; the search runs over the arc the members
/// span around their circular mean.
pub fn kde_mode_heading(headings: &[f64], h: f64, grid: usize) -> f64 {
    let (s, c) = headings
        .iter()
        .fold((0.0, 0.0), |(s, c), t| (s + t.sin(), c + t.cos()));
    let mean = if s == 0.0 && c == 0.0 { headings[0] } else { s.atan2(c) };
    let offsets: Vec<f64> = headings.iter().map(|t| wrap_angle(t - mean)).collect();
    let lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = |x: f64, o: f64| {
        let chord2 = 2.0 - 2.0 * (x - o).cos();
        (-chord2 / (2.0 * h * h)).exp()
    };
    let start = mode_on_grid(lo, hi, h, grid, |x| offsets.iter().map(|o| weight(x, *o)).sum());
    // stationary points satisfy tan x = Σ w sin o / Σ w cos o
    let best = mean_shift(start, |x| {
        let (s, c) = offsets
            .iter()
            .fold((0.0, 0.0), |(s, c), o| (s + weight(x, *o) * o.sin(), c + weight(x, *o) * o.cos()));
        s.atan2(c)
    })
    .clamp(lo, hi);
    wrap_angle(mean + best)
}

/// Fuses the detections of several detectors. Boxes are clustered by BEV IoU
/// (connected components); each cluster with enough members becomes one box
/// whose parameters are per-parameter kernel-density modes and whose score is
/// the mean member score. Single-member clusters pass through unchanged.
pub fn kbf_fuse(ensemble: &[Vec<Box7>], params: &KbfParams) -> Result<Vec<Box7>> {
    if params.bandwidth.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidArgument("bandwidths must be positive".into()));
    }
    if ensemble.is_empty() {
        return Err(Error::EmptyInput("no detector outputs to fuse".into()));
    }
    let boxes: Vec<Box7> = ensemble.iter().flatten().copied().collect();
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if boxes[i].class == boxes[j].class && bev_iou(&boxes[i], &boxes[j]) >= params.cluster_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[r]].push(i);
    }

    let mut out = Vec::new();
    for members in clusters {
        if members.len() < params.min_support.max(1) {
            continue;
        }
        if members.len() == 1 {
            out.push(boxes[members[0]]);
            continue;
        }
        let m: Vec<&Box7> = members.iter().map(|&i| &boxes[i]).collect();
        let bw = &params.bandwidth;
        let g = params.grid_points;
        let lin = |k: usize, get: fn(&Box7) -> f64| {
            let v: Vec<f64> = m.iter().map(|b| get(b)).collect();
            kde_mode_1d(&v, bw[k], g)
        };
        let headings: Vec<f64> = m.iter().map(|b| b.heading).collect();
        let mut fused = Box7::new(
            [lin(0, |b| b.cx), lin(1, |b| b.cy), lin(2, |b| b.cz)],
            [lin(3, |b| b.l), lin(4, |b| b.w), lin(5, |b| b.h)],
            kde_mode_heading(&headings, bw[6], g),
            m[0].class,
        );
        let scores: Vec<f64> = m.iter().filter_map(|b| b.score).collect();
        fused.score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        out.push(fused);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ObjectClass;
    use std::f64::consts::PI;

    fn params() -> KbfParams {
        KbfParams::from(&super::super::config::FusionConfig::default())
    }

    fn car(x: f64, heading: f64, score: f64) -> Box7 {
        Box7::new([x, 2.0, 0.8], [4.5, 1.9, 1.7], heading, ObjectClass::Vehicle).with_score(score)
    }

    #[test]
    fn singleton_passes_through() {
        let b = car(3.3, 0.7, 0.61);
        assert_eq!(kbf_fuse(&[vec![b]], &params()).unwrap(), vec![b]);
    }

    #[test]
    fn identical_boxes_fuse_to_themselves() {
        let b = car(3.0, 0.25, 0.8);
        let c = car(3.0, 0.25, 0.4);
        let out = kbf_fuse(&[vec![b], vec![c]], &params()).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].cx - 3.0).abs() < 1e-12);
        assert!((out[0].heading - 0.25).abs() < 1e-12);
        assert!((out[0].score.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn heading_mode_across_the_seam() {
        let t = kde_mode_heading(&[PI - 0.05, -PI + 0.05], 0.2, 201);
        assert!((wrap_angle(t - PI)).abs() < 1e-9, "{t}");
    }

    #[test]
    fn min_support_and_bad_bandwidth() {
        let mut p = params();
        p.min_support = 2;
        assert!(kbf_fuse(&[vec![car(0.0, 0.0, 0.5)]], &p).unwrap().is_empty());
        p.bandwidth[3] = 0.0;
        assert!(kbf_fuse(&[vec![]], &p).is_err());
    }
}
