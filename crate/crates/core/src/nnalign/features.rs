//! Per-point input features and the region box coder.
//!
//! Every region gets a canonical frame: the anchor heading axis flipped to
//! point away from the sensor, and the lateral axis mirrored the same way.
//! Region points are fed to the encoder as
//! `[u, v, z, z_abs, intensity]` with `u, v, z` relative to the anchor center
//! and divided by fixed scales, so object size stays visible to the head.
//! The global cloud uses the same layout around the ego origin.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;

use crate::geom::{wrap_angle, Box7, Point};

pub const POINT_FEATURES: usize = 5;
pub type PointInput = [f64; POINT_FEATURES];

/// Margin added to each side of a region when cropping points.
pub const REGION_MARGIN: f64 = 0.5;
/// Coordinate scales of the ego-centered global feature.
pub const GLOBAL_HALF_EXTENT: [f64; 3] = [25.0, 25.0, 3.0];
/// Vertical half-size of a region: a tall column, so an object displaced
/// vertically (elevation or tilt) still falls inside its region.
pub const REGION_HALF_HEIGHT: f64 = 3.0;
const Z_ABS_SCALE: f64 = 2.0;
const REGION_SCALE: [f64; 3] = [3.0, 3.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionFrame {
    pub anchor: Box7,
    /// Unit axis along the anchor heading, oriented away from the sensor.
    pub u: [f64; 2],
    /// Unit lateral axis, oriented away from the sensor.
    pub v: [f64; 2],
    /// `+1` when `(u, v)` is right-handed, `-1` when mirrored.
    pub handedness: f64,
    pub half_extent: [f64; 3],
}

impl RegionFrame {
    pub fn new(anchor: &Box7) -> Self {
        let c = [anchor.cx, anchor.cy];
        let (s, co) = anchor.heading.sin_cos();
        let mut u = [co, s];
        if u[0] * c[0] + u[1] * c[1] < 0.0 {
            u = [-u[0], -u[1]];
        }
        let mut v = [-u[1], u[0]];
        let mut handedness = 1.0;
        if v[0] * c[0] + v[1] * c[1] < 0.0 {
            v = [-v[0], -v[1]];
            handedness = -1.0;
        }
        Self {
            anchor: *anchor,
            u,
            v,
            handedness,
            // square footprint so a heading error does not cut the object off
            half_extent: [
                0.5 * anchor.l.max(anchor.w) + REGION_MARGIN,
                0.5 * anchor.l.max(anchor.w) + REGION_MARGIN,
                REGION_HALF_HEIGHT,
            ],
        }
    }

    /// Unnormalized canonical coordinates relative to the anchor center.
    pub fn canonical(&self, p: &Vector3<f64>) -> [f64; 3] {
        let dx = p.x - self.anchor.cx;
        let dy = p.y - self.anchor.cy;
        [
            dx * self.u[0] + dy * self.u[1],
            dx * self.v[0] + dy * self.v[1],
            p.z - self.anchor.cz,
        ]
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.canonical(p);
        (0..3).all(|i| q[i].abs() <= self.half_extent[i])
    }

    pub fn point_input(&self, p: &Point) -> PointInput {
        let q = self.canonical(&p.xyz());
        [
            q[0] / REGION_SCALE[0],
            q[1] / REGION_SCALE[1],
            q[2] / REGION_SCALE[2],
            p.z / Z_ABS_SCALE,
            p.intensity,
        ]
    }

    fn diag(&self) -> f64 {
        self.anchor.l.hypot(self.anchor.w)
    }

    /// Regression target `[du, dv, dz, dl, dw, dh, dθ]` for `gt`.
    ///
    /// The ground truth is first rewritten in whichever of its equivalent
    /// `(l, w, θ)` / `(w, l, θ + π/2)` forms is closest in heading to the anchor.
    pub fn encode(&self, gt: &Box7) -> [f64; 7] {
        let a = &self.anchor;
        let (gl, gw, dtheta) = {
            let d0 = wrap_half_pi(gt.heading - a.heading);
            let d1 = wrap_half_pi(gt.heading + FRAC_PI_2 - a.heading);
            if d0.abs() <= d1.abs() {
                (gt.l, gt.w, d0)
            } else {
                (gt.w, gt.l, d1)
            }
        };
        let q = self.canonical(&gt.center());
        let diag = self.diag();
        [
            q[0] / diag,
            q[1] / diag,
            q[2] / a.h,
            (gl / a.l).ln(),
            (gw / a.w).ln(),
            (gt.h / a.h).ln(),
            dtheta * self.handedness,
        ]
    }

    pub fn decode(&self, r: &[f64]) -> Box7 {
        let a = &self.anchor;
        let diag = self.diag();
        let du = r[0] * diag;
        let dv = r[1] * diag;
        let cx = a.cx + du * self.u[0] + dv * self.v[0];
        let cy = a.cy + du * self.u[1] + dv * self.v[1];
        let cz = a.cz + r[2] * a.h;
        let clamp = |x: f64| x.clamp(-3.0, 3.0);
        let mut b = Box7::new(
            [cx, cy, cz],
            [
                a.l * clamp(r[3]).exp(),
                a.w * clamp(r[4]).exp(),
                a.h * clamp(r[5]).exp(),
            ],
            a.heading + r[6] * self.handedness,
            a.class,
        );
        b.score = None;
        b
    }
}

/// Wraps into `[-π/2, π/2)`.
pub fn wrap_half_pi(a: f64) -> f64 {
    let r = wrap_angle(a);
    if r >= FRAC_PI_2 {
        r - PI
    } else if r < -FRAC_PI_2 {
        r + PI
    } else {
        r
    }
}

/// Encoder inputs for the whole cloud, expressed around the ego origin.
pub fn global_inputs(points: &[Point]) -> Vec<PointInput> {
    points
        .iter()
        .map(|p| {
            [
                p.x / GLOBAL_HALF_EXTENT[0],
                p.y / GLOBAL_HALF_EXTENT[1],
                p.z / GLOBAL_HALF_EXTENT[2],
                p.z / Z_ABS_SCALE,
                p.intensity,
            ]
        })
        .collect()
}

/// Encoder inputs for the points falling inside the padded region.
pub fn region_inputs(points: &[Point], frame: &RegionFrame) -> Vec<PointInput> {
    points
        .iter()
        .filter(|p| frame.contains(&p.xyz()))
        .map(|p| frame.point_input(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ObjectClass;

    fn anchor(c: [f64; 3], heading: f64) -> Box7 {
        Box7::new(c, [4.0, 1.8, 1.5], heading, ObjectClass::Vehicle)
    }

    #[test]
    fn coder_round_trip() {
        for (c, h) in [
            ([10.0, 3.0, 0.8], 0.4),
            ([-7.0, 2.0, 0.5], 2.9),
            ([4.0, -9.0, 1.0], -1.2),
            ([-3.0, -3.0, 0.7], -2.5),
        ] {
            let f = RegionFrame::new(&anchor(c, h));
            let gt = Box7::new(
                [c[0] + 0.7, c[1] - 0.4, c[2] + 0.1],
                [4.6, 1.9, 1.7],
                h + 0.3,
                ObjectClass::Vehicle,
            );
            let r = f.encode(&gt);
            let back = f.decode(&r);
            assert!((back.center() - gt.center()).norm() < 1e-12);
            assert!((back.l - gt.l).abs() < 1e-12 && (back.w - gt.w).abs() < 1e-12);
            assert!(wrap_half_pi(back.heading - gt.heading).abs() < 1e-12);
        }
    }

    #[test]
    fn coder_prefers_closest_equivalent() {
        let f = RegionFrame::new(&anchor([10.0, 0.0, 0.8], 0.0));
        let gt = Box7::new([10.0, 0.0, 0.8], [1.8, 4.0, 1.5], FRAC_PI_2, ObjectClass::Vehicle);
        let r = f.encode(&gt);
        assert!(r[6].abs() < 1e-12);
        assert!(r[3].abs() < 1e-12 && r[4].abs() < 1e-12);
    }

    #[test]
    fn axes_point_away_from_sensor() {
        let f = RegionFrame::new(&anchor([-10.0, 5.0, 0.0], 0.3));
        let c = [-10.0, 5.0];
        assert!(f.u[0] * c[0] + f.u[1] * c[1] >= 0.0);
        assert!(f.v[0] * c[0] + f.v[1] * c[1] >= 0.0);
    }
}
