//! Rigid-body geometry and the three frame-level augmentations.
//!
//! Frames hold points and boxes in the ego (sensor) frame. A [`Pose`] maps ego
//! coordinates to world coordinates: `w = R·p + t`, with `R = Rz(yaw)·Ry(pitch)·Rx(roll)`
//! in a right-handed x-forward / y-left / z-up convention.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn with_xyz(&self, v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z, self.intensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 2] = [ObjectClass::Vehicle, ObjectClass::Pedestrian];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
        }
    }

    /// Default evaluation IoU threshold: 0.7 for vehicles, 0.5 for pedestrians.
    pub fn default_iou_threshold(self) -> f64 {
        match self {
            ObjectClass::Vehicle => 0.7,
            ObjectClass::Pedestrian => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Vehicle,
    Drone,
    Quadruped,
}

impl Platform {
    pub fn tag(self) -> u8 {
        match self {
            Platform::Vehicle => 0,
            Platform::Drone => 1,
            Platform::Quadruped => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Platform::Vehicle),
            1 => Some(Platform::Drone),
            2 => Some(Platform::Quadruped),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Platform::Vehicle => "vehicle",
            Platform::Drone => "drone",
            Platform::Quadruped => "quadruped",
        }
    }
}

/// 7-DoF box: center, dimensions and heading about +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box7 {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub heading: f64,
    pub class: ObjectClass,
    /// Confidence; present only on predictions.
    pub score: Option<f64>,
}

impl Box7 {
    pub fn new(center: [f64; 3], dims: [f64; 3], heading: f64, class: ObjectClass) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            l: dims[0],
            w: dims[1],
            h: dims[2],
            heading: wrap_angle(heading),
            class,
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.cx, self.cy, self.cz)
    }

    pub fn set_center(&mut self, c: Vector3<f64>) {
        self.cx = c.x;
        self.cy = c.y;
        self.cz = c.z;
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.heading]
            .iter()
            .all(|v| v.is_finite());
        finite && self.l > 0.0 && self.w > 0.0 && self.h > 0.0
    }

    /// Heading-aligned box-local coordinates of `p`.
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.heading.sin_cos();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        Vector3::new(c * dx + s * dy, -s * dx + c * dy, p.z - self.cz)
    }

    pub fn from_local(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.heading.sin_cos();
        Vector3::new(
            self.cx + c * q.x - s * q.y,
            self.cy + s * q.x + c * q.y,
            self.cz + q.z,
        )
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.to_local(p);
        q.x.abs() <= 0.5 * self.l && q.y.abs() <= 0.5 * self.w && q.z.abs() <= 0.5 * self.h
    }

    /// Ground-plane corners in counter-clockwise order.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.heading.sin_cos();
        let hl = 0.5 * self.l;
        let hw = 0.5 * self.w;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [self.cx + c * u - s * v, self.cy + s * u + c * v])
    }
}

/// SE(3) ego pose: Euler roll/pitch/yaw plus translation, ego → world.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub t: [f64; 3],
}

impl Pose {
    pub fn new(roll: f64, pitch: f64, yaw: f64, t: [f64; 3]) -> Self {
        Self {
            roll,
            pitch,
            yaw,
            t,
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.t[0], self.t[1], self.t[2])
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_zyx(self.roll, self.pitch, self.yaw)
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn to_ego(&self, w: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (w - self.translation())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub platform: Platform,
    pub timestamp: f64,
    pub points: Vec<Point>,
    pub boxes: Vec<Box7>,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JitterSample {
    pub delta_roll: f64,
    pub delta_pitch: f64,
}

impl JitterSample {
    pub fn new(delta_roll: f64, delta_pitch: f64) -> Self {
        Self {
            delta_roll,
            delta_pitch,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_zyx(self.delta_roll, self.delta_pitch, 0.0)
    }
}

fn rotation_zyx(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn euler_to_rotation(roll: f64, pitch: f64, yaw: f64) -> Result<Matrix3<f64>> {
    if !(roll.is_finite() && pitch.is_finite() && yaw.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite Euler angles ({roll}, {pitch}, {yaw})"
        )));
    }
    Ok(rotation_zyx(roll, pitch, yaw))
}

/// Largest jitter magnitude accepted by [`apply_rpj`].
pub const MAX_JITTER: f64 = FRAC_PI_4;

fn rotate_frame(frame: &Frame, rot: &Matrix3<f64>) -> Frame {
    let points = frame
        .points
        .iter()
        .map(|p| p.with_xyz(rot * p.xyz()))
        .collect();
    let boxes = frame
        .boxes
        .iter()
        .map(|b| {
            let mut out = *b;
            out.set_center(rot * b.center());
            out
        })
        .collect();
    Frame {
        points,
        boxes,
        ..frame.clone()
    }
}

fn check_jitter(jitter: &JitterSample) -> Result<()> {
    let ok = |a: f64| a.is_finite() && a.abs() <= MAX_JITTER;
    if ok(jitter.delta_roll) && ok(jitter.delta_pitch) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "jitter angles ({}, {}) exceed ±π/4",
            jitter.delta_roll, jitter.delta_pitch
        )))
    }
}

/// Random platform jitter: rotates every point and box center by
/// `Ry(Δpitch)·Rx(Δroll)`. Box dimensions and headings are carried over, and
/// the stored pose is left untouched.
pub fn apply_rpj(frame: &Frame, jitter: &JitterSample) -> Result<Frame> {
    check_jitter(jitter)?;
    if jitter.delta_roll == 0.0 && jitter.delta_pitch == 0.0 {
        return Ok(frame.clone());
    }
    Ok(rotate_frame(frame, &jitter.rotation()))
}

/// Undoes [`apply_rpj`] by applying the transposed rotation.
pub fn undo_rpj(frame: &Frame, jitter: &JitterSample) -> Result<Frame> {
    check_jitter(jitter)?;
    if jitter.delta_roll == 0.0 && jitter.delta_pitch == 0.0 {
        return Ok(frame.clone());
    }
    Ok(rotate_frame(frame, &jitter.rotation().transpose()))
}

/// Draws `(Δroll, Δpitch)` independently and uniformly from `[-range, range]` degrees.
pub fn sample_rpj<R: Rng + ?Sized>(range_deg: f64, rng: &mut R) -> JitterSample {
    let r = range_deg.max(0.0).to_radians();
    if r == 0.0 {
        return JitterSample::default();
    }
    let roll = rng.random_range(-r..=r);
    let pitch = rng.random_range(-r..=r);
    JitterSample::new(roll, pitch)
}

/// The level pose at `vehicle_height` that keeps the yaw and planar position of `pose`.
pub fn virtual_pose(pose: &Pose, vehicle_height: f64) -> Pose {
    Pose::new(0.0, 0.0, pose.yaw, [pose.t[0], pose.t[1], vehicle_height])
}

/// Rigid map from the real ego frame into the virtual ego frame, `T̄⁻¹·T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VppTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub heading_offset: f64,
}

impl VppTransform {
    pub fn new(pose: &Pose, vehicle_height: f64) -> Self {
        let virt = virtual_pose(pose, vehicle_height);
        let rv_t = virt.rotation().transpose();
        Self {
            rotation: rv_t * pose.rotation(),
            translation: rv_t * (pose.translation() - virt.translation()),
            heading_offset: virt.yaw - pose.yaw,
        }
    }

    pub fn forward(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (q - self.translation)
    }

    pub fn forward_box(&self, b: &Box7) -> Box7 {
        let mut out = *b;
        out.set_center(self.forward(&b.center()));
        out.heading = wrap_angle(b.heading + self.heading_offset);
        out
    }

    pub fn inverse_box(&self, b: &Box7) -> Box7 {
        let mut out = *b;
        out.set_center(self.inverse(&b.center()));
        out.heading = wrap_angle(b.heading - self.heading_offset);
        out
    }
}

/// Virtual platform pose: re-expresses the frame as if it were captured by a
/// level sensor at `vehicle_height` with the same yaw and planar position.
pub fn apply_vpp(frame: &Frame, vehicle_height: f64) -> Frame {
    let pose = frame.pose;
    if pose.roll == 0.0 && pose.pitch == 0.0 && pose.t[2] == vehicle_height {
        return frame.clone();
    }
    let xf = VppTransform::new(&pose, vehicle_height);
    Frame {
        platform: frame.platform,
        timestamp: frame.timestamp,
        points: frame
            .points
            .iter()
            .map(|p| p.with_xyz(xf.forward(&p.xyz())))
            .collect(),
        boxes: frame.boxes.iter().map(|b| xf.forward_box(b)).collect(),
        pose: virtual_pose(&pose, vehicle_height),
    }
}

/// Random object scaling: every box gets an independent factor in
/// `[low, high]`; points inside the box are scaled about its center in
/// box-local coordinates.
pub fn random_object_scaling<R: Rng + ?Sized>(
    frame: &Frame,
    scale_range: (f64, f64),
    rng: &mut R,
) -> Result<Frame> {
    let (low, high) = scale_range;
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale range ({low}, {high}) must satisfy 0 < low <= high"
        )));
    }
    let factors: Vec<f64> = frame
        .boxes
        .iter()
        .map(|_| {
            if low == high {
                low
            } else {
                rng.random_range(low..=high)
            }
        })
        .collect();

    let mut out = frame.clone();
    // Membership is decided on the original points; the first containing box wins.
    for p in out.points.iter_mut() {
        let v = p.xyz();
        let Some((b, s)) = frame
            .boxes
            .iter()
            .zip(&factors)
            .find(|(b, _)| b.contains(&v))
        else {
            continue;
        };
        if *s == 1.0 {
            continue;
        }
        let q = b.to_local(&v) * *s;
        *p = p.with_xyz(b.from_local(&q));
    }
    for (b, s) in out.boxes.iter_mut().zip(&factors) {
        if *s != 1.0 {
            b.l *= s;
            b.w *= s;
            b.h *= s;
        }
    }
    Ok(out)
}

/// Relative pitch `θ^r = atan2(cz, ρ)` and BEV range `ρ` of a box seen from the ego origin.
/// Negative pitch means the target sits below the sensor.
pub fn relative_pitch_and_range(b: &Box7) -> Result<(f64, f64)> {
    let rho = b.cx.hypot(b.cy);
    if rho == 0.0 && b.cz <= 0.0 {
        return Err(Error::UndefinedAngle(format!(
            "box center ({}, {}, {}) has no defined pitch",
            b.cx, b.cy, b.cz
        )));
    }
    let theta = b.cz.atan2(rho);
    debug_assert!(theta > -FRAC_PI_2 && theta <= FRAC_PI_2);
    Ok((theta, rho))
}
