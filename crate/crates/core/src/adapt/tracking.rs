//! Frame-to-frame association of detections and gap interpolation.

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Box7};
use crate::metrics::bev_iou;

/// BEV IoU needed to extend a track.
pub const ASSOCIATION_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackObservation {
    pub frame: usize,
    pub timestamp: f64,
    pub bbox: Box7,
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub observations: Vec<TrackObservation>,
}

impl Track {
    fn last(&self) -> &TrackObservation {
        &self.observations[self.observations.len() - 1]
    }

    /// Constant-velocity extrapolation of the last box to `frame`.
    fn predict(&self, frame: usize) -> Box7 {
        let last = self.last();
        let mut b = last.bbox;
        if self.observations.len() >= 2 {
            let prev = &self.observations[self.observations.len() - 2];
            let dt = (last.frame - prev.frame) as f64;
            let k = (frame - last.frame) as f64 / dt;
            b.cx += (last.bbox.cx - prev.bbox.cx) * k;
            b.cy += (last.bbox.cy - prev.bbox.cy) * k;
            b.cz += (last.bbox.cz - prev.bbox.cz) * k;
        }
        b
    }
}

/// Linear blend of two boxes at `t ∈ [0, 1]`; heading along the shorter arc.
pub fn interpolate_box(a: &Box7, b: &Box7, t: f64) -> Box7 {
    let lerp = |x: f64, y: f64| x + (y - x) * t;
    let mut out = Box7::new(
        [lerp(a.cx, b.cx), lerp(a.cy, b.cy), lerp(a.cz, b.cz)],
        [lerp(a.l, b.l), lerp(a.w, b.w), lerp(a.h, b.h)],
        a.heading + wrap_angle(b.heading - a.heading) * t,
        a.class,
    );
    out.score = match (a.score, b.score) {
        (Some(x), Some(y)) => Some(lerp(x, y)),
        (s, None) | (None, s) => s,
    };
    out
}

/// Greedy tracking over time-ordered frames `(timestamp, detections)`.
///
/// Each frame's detections are matched one-to-one to live tracks by BEV IoU
/// with the tracks' constant-velocity predictions (highest IoU first). When a
/// track is re-acquired after at most `max_gap` missed frames the gap is
/// filled with interpolated boxes; unmatched detections open new tracks.
/// Observed boxes are never modified.
pub fn temporal_refine(frames: &[(f64, Vec<Box7>)], max_gap: usize) -> Result<Vec<Track>> {
    for w in frames.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Precondition(format!(
                "timestamps must increase strictly ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    let mut tracks: Vec<Track> = Vec::new();
    for (f, (ts, dets)) in frames.iter().enumerate() {
        let live: Vec<usize> = tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| f - t.last().frame <= max_gap + 1)
            .map(|(i, _)| i)
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &ti in &live {
            let pred = tracks[ti].predict(f);
            for (di, d) in dets.iter().enumerate() {
                if d.class != pred.class {
                    continue;
                }
                let iou = bev_iou(&pred, d);
                if iou >= ASSOCIATION_IOU {
                    pairs.push((iou, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; tracks.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            let last = *tracks[ti].last();
            let gap = f - last.frame;
            for g in 1..gap {
                let t = g as f64 / gap as f64;
                tracks[ti].observations.push(TrackObservation {
                    frame: last.frame + g,
                    timestamp: frames[last.frame + g].0,
                    bbox: interpolate_box(&last.bbox, &dets[di], t),
                    interpolated: true,
                });
            }
            tracks[ti].observations.push(TrackObservation {
                frame: f,
                timestamp: *ts,
                bbox: dets[di],
                interpolated: false,
            });
        }
        for (di, d) in dets.iter().enumerate() {
            if !det_used[di] {
                tracks.push(Track {
                    id: tracks.len(),
                    observations: vec![TrackObservation {
                        frame: f,
                        timestamp: *ts,
                        bbox: *d,
                        interpolated: false,
                    }],
                });
            }
        }
    }
    Ok(tracks)
}

/// Per-frame boxes (observed and interpolated) of a set of tracks.
pub fn tracks_to_frames(tracks: &[Track], frames: usize) -> Vec<Vec<Box7>> {
    let mut out = vec![Vec::new(); frames];
    for t in tracks {
        for o in &t.observations {
            if o.frame < frames {
                out[o.frame].push(o.bbox);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ObjectClass;

    fn car(x: f64, heading: f64) -> Box7 {
        Box7::new([x, 0.0, 0.0], [4.5, 1.9, 1.7], heading, ObjectClass::Vehicle)
    }

    #[test]
    fn fills_a_one_frame_gap() {
        let seq = vec![(0.0, vec![car(0.0, 0.0)]), (0.1, vec![]), (0.2, vec![car(2.0, 0.0)])];
        let tracks = temporal_refine(&seq, 2).unwrap();
        assert_eq!(tracks.len(), 1);
        let obs = &tracks[0].observations;
        assert_eq!(obs.len(), 3);
        assert!(obs[1].interpolated && !obs[0].interpolated && !obs[2].interpolated);
        assert!((obs[1].bbox.cx - 1.0).abs() < 1e-12);
        assert_eq!(obs[1].timestamp, 0.1);
    }

    #[test]
    fn heading_takes_the_short_way() {
        let a = car(0.0, 170f64.to_radians());
        let b = car(0.0, -170f64.to_radians());
        let m = interpolate_box(&a, &b, 0.5);
        assert!((m.heading.abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn long_gaps_start_new_tracks() {
        let seq = vec![
            (0.0, vec![car(0.0, 0.0)]),
            (0.1, vec![]),
            (0.2, vec![]),
            (0.3, vec![]),
            (0.4, vec![car(0.0, 0.0)]),
        ];
        assert_eq!(temporal_refine(&seq, 2).unwrap().len(), 2);
        assert_eq!(temporal_refine(&seq, 3).unwrap().len(), 1);
        let bad = vec![(0.0, vec![]), (0.0, vec![])];
        assert!(temporal_refine(&bad, 1).is_err());
    }
}
