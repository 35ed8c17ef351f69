//! Synthetic multi-platform scenes with known ground truth.
//!
//! There is no ray casting: points are sampled on the ground plane and on the
//! sensor-facing faces of each box, thinned by a radial falloff and by the
//! incidence angle. That is enough to reproduce the platform discrepancies the
//! adaptation code cares about: elevation shift, ego jitter and target pitch.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Box7, Frame, ObjectClass, Platform, Point, Pose};
use crate::metrics::bev_intersection_area;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformProfile {
    pub platform: Platform,
    /// Sensor height range in meters; a sequence draws one value from it.
    pub sensor_height: (f64, f64),
    /// Roll/pitch bound in degrees.
    pub jitter_bound: f64,
    /// Hard cap on points per frame.
    pub points_per_frame: usize,
    /// Acceptance ∝ (ρ₀/ρ)^falloff.
    pub falloff: f64,
    pub max_range: f64,
    pub ground_density: f64,
    pub object_density: f64,
}

impl PlatformProfile {
    pub fn vehicle() -> Self {
        Self {
            platform: Platform::Vehicle,
            sensor_height: (1.7, 1.7),
            jitter_bound: 5.0,
            points_per_frame: 2000,
            falloff: 1.0,
            max_range: 50.0,
            ground_density: 1.0,
            object_density: 30.0,
        }
    }

    pub fn drone() -> Self {
        Self {
            platform: Platform::Drone,
            sensor_height: (3.0, 8.0),
            jitter_bound: 20.0,
            ..Self::vehicle()
        }
    }

    pub fn quadruped() -> Self {
        Self {
            platform: Platform::Quadruped,
            sensor_height: (0.5, 0.5),
            jitter_bound: 20.0,
            ..Self::vehicle()
        }
    }

    pub fn for_platform(p: Platform) -> Self {
        match p {
            Platform::Vehicle => Self::vehicle(),
            Platform::Drone => Self::drone(),
            Platform::Quadruped => Self::quadruped(),
        }
    }

    /// Midpoint of the sensor height range; the ground-plane offset a detector
    /// configured for this platform assumes.
    pub fn nominal_height(&self) -> f64 {
        0.5 * (self.sensor_height.0 + self.sensor_height.1)
    }

    /// Pins the sensor height for one sequence.
    pub fn for_sequence<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let (lo, hi) = self.sensor_height;
        let h = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        Self {
            sensor_height: (h, h),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.sensor_height;
        if !(lo > 0.0 && lo <= hi) || !(self.jitter_bound >= 0.0) || self.max_range <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid platform profile {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// Half-size of the square world, meters.
    pub extent: f64,
    pub vehicle_count: (usize, usize),
    pub pedestrian_count: (usize, usize),
    pub vehicle_dims: [f64; 3],
    pub vehicle_dims_sigma: [f64; 3],
    pub pedestrian_dims: [f64; 3],
    pub pedestrian_dims_sigma: [f64; 3],
    /// Minimum free space between footprints.
    pub clearance: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent: 45.0,
            vehicle_count: (8, 14),
            pedestrian_count: (3, 8),
            vehicle_dims: [4.5, 1.9, 1.7],
            vehicle_dims_sigma: [0.35, 0.12, 0.15],
            pedestrian_dims: [0.8, 0.8, 1.75],
            pedestrian_dims_sigma: [0.1, 0.1, 0.08],
            clearance: 1.0,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        let positive = |d: &[f64; 3]| d.iter().all(|v| *v > 0.0);
        if self.extent <= 0.0
            || !positive(&self.vehicle_dims)
            || !positive(&self.pedestrian_dims)
            || self.vehicle_count.0 > self.vehicle_count.1
            || self.pedestrian_count.0 > self.pedestrian_count.1
        {
            return Err(Error::InvalidArgument(format!("invalid scene spec {self:?}")));
        }
        Ok(())
    }
}

/// World-frame objects resting on the ground plane `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<Box7>,
}

/// Gaussian truncated at ±3σ and at zero, by rejection.
pub fn truncated_gaussian<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sigma).expect("finite sigma");
    loop {
        let v = normal.sample(rng);
        if (v - mean).abs() <= 3.0 * sigma && v > 0.0 {
            return v;
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 500;

pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<Scene> {
    spec.validate()?;
    let count = |(lo, hi): (usize, usize), rng: &mut R| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let n_veh = count(spec.vehicle_count, rng);
    let n_ped = count(spec.pedestrian_count, rng);
    let jobs = std::iter::repeat_n(ObjectClass::Vehicle, n_veh)
        .chain(std::iter::repeat_n(ObjectClass::Pedestrian, n_ped));

    let mut objects: Vec<Box7> = Vec::with_capacity(n_veh + n_ped);
    let mut inflated: Vec<Box7> = Vec::with_capacity(n_veh + n_ped);
    for class in jobs {
        let (mean, sigma) = match class {
            ObjectClass::Vehicle => (spec.vehicle_dims, spec.vehicle_dims_sigma),
            ObjectClass::Pedestrian => (spec.pedestrian_dims, spec.pedestrian_dims_sigma),
        };
        let dims = [0, 1, 2].map(|i| truncated_gaussian(mean[i], sigma[i], rng));
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-spec.extent..=spec.extent);
            let y = rng.random_range(-spec.extent..=spec.extent);
            let heading = rng.random_range(-PI..PI);
            let b = Box7::new([x, y, 0.5 * dims[2]], dims, heading, class);
            let mut grown = b;
            grown.l += spec.clearance;
            grown.w += spec.clearance;
            if inflated
                .iter()
                .all(|o| bev_intersection_area(o, &grown) == 0.0)
            {
                objects.push(b);
                inflated.push(grown);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Capacity(format!(
                "could not place object {} of the scene after {PLACEMENT_ATTEMPTS} attempts",
                objects.len() + 1
            )));
        }
    }
    Ok(Scene { objects })
}

fn acceptance(profile: &PlatformProfile, range: f64, cos_incidence: f64) -> f64 {
    const REFERENCE_RANGE: f64 = 4.0;
    let radial = (REFERENCE_RANGE / range.max(1e-6)).powf(profile.falloff).min(1.0);
    radial * (0.25 + 0.75 * cos_incidence.abs().min(1.0))
}

/// Faces of a world box as (center, outward normal, edge u, edge v).
fn box_faces(b: &Box7) -> [(Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>); 5] {
    let (s, c) = b.heading.sin_cos();
    let ax = Vector3::new(c, s, 0.0);
    let ay = Vector3::new(-s, c, 0.0);
    let az = Vector3::new(0.0, 0.0, 1.0);
    let ctr = b.center();
    let (hl, hw, hh) = (0.5 * b.l, 0.5 * b.w, 0.5 * b.h);
    [
        (ctr + ax * hl, ax, ay * b.w, az * b.h),
        (ctr - ax * hl, -ax, ay * b.w, az * b.h),
        (ctr + ay * hw, ay, ax * b.l, az * b.h),
        (ctr - ay * hw, -ay, ax * b.l, az * b.h),
        (ctr + az * hh, az, ax * b.l, ay * b.w),
    ]
}

fn sample_once<R: Rng + ?Sized>(
    scene: &Scene,
    profile: &PlatformProfile,
    pose: &Pose,
    rng: &mut R,
) -> (Vec<Point>, Vec<Option<usize>>) {
    let sensor = pose.translation();
    let mut world: Vec<(Vector3<f64>, Option<usize>)> = Vec::new();

    // ground
    let r = profile.max_range;
    let n_ground = (PI * r * r * profile.ground_density).round() as usize;
    for _ in 0..n_ground {
        let rho = r * rng.random::<f64>().sqrt();
        let phi = rng.random_range(-PI..PI);
        let p = Vector3::new(sensor.x + rho * phi.cos(), sensor.y + rho * phi.sin(), 0.0);
        let dist = (sensor - p).norm();
        let cos = sensor.z / dist.max(1e-9);
        if rng.random::<f64>() >= acceptance(profile, dist, cos) {
            continue;
        }
        if scene.objects.iter().any(|b| {
            let q = b.to_local(&p);
            q.x.abs() <= 0.5 * b.l && q.y.abs() <= 0.5 * b.w
        }) {
            continue;
        }
        world.push((p, None));
    }

    // visible object faces
    for (idx, b) in scene.objects.iter().enumerate() {
        if (b.center().xy() - sensor.xy()).norm() > r {
            continue;
        }
        for (fc, n, eu, ev) in box_faces(b) {
            if n.dot(&(sensor - fc)) <= 0.0 {
                continue;
            }
            let area = eu.norm() * ev.norm();
            let n_face = (area * profile.object_density).round() as usize;
            for _ in 0..n_face {
                let a: f64 = rng.random_range(-0.5..0.5);
                let bb: f64 = rng.random_range(-0.5..0.5);
                let p = fc + eu * a + ev * bb;
                let ray = sensor - p;
                let dist = ray.norm();
                let cos = n.dot(&ray) / dist.max(1e-9);
                if rng.random::<f64>() < acceptance(profile, dist, cos) {
                    world.push((p, Some(idx)));
                }
            }
        }
    }

    if world.len() > profile.points_per_frame {
        let mut keep: Vec<usize> = (0..world.len()).collect();
        keep.shuffle(rng);
        keep.truncate(profile.points_per_frame);
        keep.sort_unstable();
        world = keep.into_iter().map(|i| world[i]).collect();
    }

    let mut points = Vec::with_capacity(world.len());
    let mut owners = Vec::with_capacity(world.len());
    for (p, owner) in world {
        let e = pose.to_ego(&p);
        points.push(Point::new(e.x, e.y, e.z, rng.random::<f64>()));
        owners.push(owner);
    }
    (points, owners)
}

/// Minimum number of points on an object for it to be labeled.
pub const MIN_LABEL_POINTS: usize = 3;

/// Samples one sweep of `scene` from `ego_xy`. Height comes from the lower end
/// of the profile's range (pin it first with [`PlatformProfile::for_sequence`]).
pub fn sample_platform_frame<R: Rng + ?Sized>(
    scene: &Scene,
    profile: &PlatformProfile,
    ego_xy: [f64; 2],
    rng: &mut R,
) -> Result<Frame> {
    profile.validate()?;
    let bound = profile.jitter_bound.to_radians();
    let jitter = |rng: &mut R| {
        if bound == 0.0 {
            0.0
        } else {
            rng.random_range(-bound..=bound)
        }
    };
    let roll = jitter(rng);
    let pitch = jitter(rng);
    let yaw = rng.random_range(-PI..PI);
    let pose = Pose::new(roll, pitch, yaw, [ego_xy[0], ego_xy[1], profile.sensor_height.0]);
    sample_with_pose(scene, profile, &pose, rng)
}

/// Like [`sample_platform_frame`] with an explicit pose.
pub fn sample_with_pose<R: Rng + ?Sized>(
    scene: &Scene,
    profile: &PlatformProfile,
    pose: &Pose,
    rng: &mut R,
) -> Result<Frame> {
    let mut attempt = sample_once(scene, profile, pose, rng);
    if attempt.0.is_empty() {
        attempt = sample_once(scene, profile, pose, rng);
    }
    let (points, owners) = attempt;
    if points.is_empty() {
        return Err(Error::EmptyInput("frame produced no points after one resample".into()));
    }
    let mut hits = vec![0usize; scene.objects.len()];
    for o in owners.iter().flatten() {
        hits[*o] += 1;
    }
    let boxes = scene
        .objects
        .iter()
        .zip(&hits)
        .filter(|(_, &n)| n >= MIN_LABEL_POINTS)
        .map(|(b, _)| world_box_to_ego(b, pose))
        .collect();
    Ok(Frame {
        platform: profile.platform,
        timestamp: 0.0,
        points,
        boxes,
        pose: *pose,
    })
}

pub fn world_box_to_ego(b: &Box7, pose: &Pose) -> Box7 {
    let mut out = *b;
    out.set_center(pose.to_ego(&b.center()));
    out.heading = wrap_angle(b.heading - pose.yaw);
    out
}

pub fn ego_box_to_world(b: &Box7, pose: &Pose) -> Box7 {
    let mut out = *b;
    out.set_center(pose.to_world(&b.center()));
    out.heading = wrap_angle(b.heading + pose.yaw);
    out
}

/// Seed for frame `index` of a sequence seeded with `seed` (splitmix64 mix).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Frame interval of generated sequences (10 Hz).
pub const FRAME_INTERVAL: f64 = 0.1;

/// A driving/flying/walking sequence through one scene: the ego moves at a
/// constant planar velocity and every frame gets an independent jitter.
pub fn generate_sequence(
    spec: &SceneSpec,
    profile: &PlatformProfile,
    frames: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = generate_scene(spec, &mut rng)?;
    let profile = profile.for_sequence(&mut rng);
    let speed = 0.5;

    let start_bound = (0.5 * spec.extent).max(1.0);
    let mut path = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let start = [
            rng.random_range(-start_bound..=start_bound),
            rng.random_range(-start_bound..=start_bound),
        ];
        let dir: f64 = rng.random_range(-PI..PI);
        let positions: Vec<[f64; 2]> = (0..frames)
            .map(|i| {
                let s = speed * i as f64;
                [start[0] + s * dir.cos(), start[1] + s * dir.sin()]
            })
            .collect();
        let clear = positions.iter().all(|p| {
            let v = Vector3::new(p[0], p[1], 0.0);
            scene.objects.iter().all(|b| {
                let q = b.to_local(&v);
                q.x.abs() > 0.5 * b.l + 1.5 || q.y.abs() > 0.5 * b.w + 1.5
            })
        });
        if clear {
            path = Some(positions);
            break;
        }
    }
    let path = path.ok_or_else(|| Error::Capacity("no collision-free ego path".into()))?;

    path.iter()
        .enumerate()
        .map(|(i, xy)| {
            let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut f = sample_platform_frame(&scene, &profile, *xy, &mut frng)?;
            f.timestamp = i as f64 * FRAME_INTERVAL;
            Ok(f)
        })
        .collect()
}

/// `sequences × frames_per_sequence` frames; sequence `k` uses `derive_seed(seed, k)`.
pub fn generate_dataset(
    spec: &SceneSpec,
    profile: &PlatformProfile,
    sequences: usize,
    frames_per_sequence: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    let mut out = Vec::with_capacity(sequences * frames_per_sequence);
    for k in 0..sequences {
        out.extend(generate_sequence(
            spec,
            profile,
            frames_per_sequence,
            derive_seed(seed ^ 0xA5A5_5A5A, k as u64),
        )?);
    }
    Ok(out)
}
