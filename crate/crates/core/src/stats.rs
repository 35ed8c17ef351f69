//! Per-platform discrepancy statistics: point elevation, ego-motion jitter and
//! target pitch versus BEV range.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{relative_pitch_and_range, Frame};

/// Streaming summary with exact merge (count / mean / M2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    m2: f64,
}

impl DistributionSummary {
    pub fn of(value: f64) -> Self {
        Self {
            count: 1,
            mean: value,
            variance: 0.0,
            min: value,
            max: value,
            m2: 0.0,
        }
    }

    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut it = samples.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::EmptyInput("no samples to summarize".into()))?;
        let mut s = Self::of(first);
        for v in it {
            s.push(v);
        }
        Ok(s)
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
        self.variance = self.m2 / self.count as f64;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&self, other: &Self) -> Self {
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / n as f64;
        Self {
            count: n,
            mean,
            variance: m2 / n as f64,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
            m2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count-weighted mean of the bin centers.
    pub fn center_mean(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let acc: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| 0.5 * (self.edges[i] + self.edges[i + 1]) * c as f64)
            .sum();
        Some(acc / total as f64)
    }
}

/// Histogram of point elevations over `[lo, hi)` with the last bin closed.
/// Out-of-range samples saturate into the end bins.
pub fn elevation_histogram(frames: &[Frame], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames".into()));
    }
    let (lo, hi) = range;
    if bins == 0 || !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "need bins >= 1 and lo < hi, got {bins} over ({lo}, {hi})"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for z in frames.iter().flat_map(|f| f.points.iter().map(|p| p.z)) {
        let idx = if z.is_nan() || z < lo {
            0
        } else {
            (((z - lo) / width).floor() as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Roll and pitch summaries over the frames' ego poses.
pub fn ego_motion_stats(frames: &[Frame]) -> Result<(DistributionSummary, DistributionSummary)> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames".into()));
    }
    let roll = DistributionSummary::from_samples(frames.iter().map(|f| f.pose.roll))?;
    let pitch = DistributionSummary::from_samples(frames.iter().map(|f| f.pose.pitch))?;
    Ok((roll, pitch))
}

/// One `(ρ, θ^r)` pair per box with a defined pitch, in frame order.
pub fn box_pitch_range_scatter(frames: &[Frame]) -> Vec<(f64, f64)> {
    frames
        .iter()
        .flat_map(|f| f.boxes.iter())
        .filter_map(|b| relative_pitch_and_range(b).ok())
        .map(|(theta, rho)| (rho, theta))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Box7, ObjectClass, Platform, Point, Pose};
    use std::f64::consts::FRAC_PI_4;

    fn frame(points: Vec<Point>, boxes: Vec<Box7>, pose: Pose) -> Frame {
        Frame {
            platform: Platform::Vehicle,
            timestamp: 0.0,
            points,
            boxes,
            pose,
        }
    }

    #[test]
    fn single_value_mass() {
        let f = frame(vec![Point::new(1.0, 0.0, 0.0, 0.0); 10], vec![], Pose::default());
        let h = elevation_histogram(&[f], 4, (-2.0, 2.0)).unwrap();
        assert_eq!(h.counts, vec![0, 0, 10, 0]);
        assert_eq!(h.edges, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn saturating_bins_and_closed_end() {
        let zs = [-9.0, 2.0, 9.0, f64::NAN, 1.999];
        let pts = zs.iter().map(|&z| Point::new(0.0, 0.0, z, 0.0)).collect();
        let h = elevation_histogram(&[frame(pts, vec![], Pose::default())], 4, (-2.0, 2.0)).unwrap();
        assert_eq!(h.counts, vec![2, 0, 0, 3]);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(
            elevation_histogram(&[], 4, (0.0, 1.0)),
            Err(Error::EmptyInput(_))
        ));
        let f = frame(vec![], vec![], Pose::default());
        assert!(elevation_histogram(std::slice::from_ref(&f), 0, (0.0, 1.0)).is_err());
        assert!(elevation_histogram(&[f], 3, (1.0, 1.0)).is_err());
    }

    #[test]
    fn level_and_two_point_ego_motion() {
        let level: Vec<Frame> = (0..5).map(|_| frame(vec![], vec![], Pose::default())).collect();
        let (r, p) = ego_motion_stats(&level).unwrap();
        assert_eq!((r.mean, r.variance, p.mean, p.variance), (0.0, 0.0, 0.0, 0.0));

        let a = 0.1;
        let frames: Vec<Frame> = [-a, a, -a, a]
            .iter()
            .map(|&roll| frame(vec![], vec![], Pose::new(roll, 0.0, 0.0, [0.0; 3])))
            .collect();
        let (r, _) = ego_motion_stats(&frames).unwrap();
        assert!(r.mean.abs() < 1e-15);
        assert!((r.variance - a * a).abs() < 1e-15);
        assert!(ego_motion_stats(&[]).is_err());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 0.013 - 3.0).collect();
        let s = DistributionSummary::from_samples(xs.iter().copied()).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(((s.variance - var) / var).abs() < 1e-12);
        let (a, b) = xs.split_at(377);
        let merged = DistributionSummary::from_samples(a.iter().copied())
            .unwrap()
            .merge(&DistributionSummary::from_samples(b.iter().copied()).unwrap());
        assert!(((merged.variance - var) / var).abs() < 1e-12);
        assert!(merged.min <= merged.mean && merged.mean <= merged.max);
    }

    #[test]
    fn scatter_fixtures() {
        assert!(box_pitch_range_scatter(&[frame(vec![], vec![], Pose::default())]).is_empty());
        let b = Box7::new([10.0, 0.0, -10.0], [1.0, 1.0, 1.0], 0.0, ObjectClass::Vehicle);
        let s = box_pitch_range_scatter(&[frame(vec![], vec![b], Pose::default())]);
        assert_eq!(s.len(), 1);
        assert!((s[0].0 - 10.0).abs() < 1e-15 && (s[0].1 + FRAC_PI_4).abs() < 1e-15);
    }
}
