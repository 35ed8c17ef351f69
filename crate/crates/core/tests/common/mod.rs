//! Independent reference implementations used by the oracle and acceptance
//! tests. None of these call into the library's metric or loss code.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rand::Rng;
use xplat3d::geom::{Box7, Frame, ObjectClass, Platform, Point, Pose};

pub fn random_box(rng: &mut impl Rng) -> Box7 {
    Box7::new(
        [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)],
        [rng.random_range(0.5..5.0), rng.random_range(0.5..3.0), rng.random_range(0.5..2.5)],
        rng.random_range(-3.2..3.2),
        ObjectClass::Vehicle,
    )
}

fn inside_bev(b: &Box7, x: f64, y: f64) -> bool {
    let (s, c) = b.heading.sin_cos();
    let (dx, dy) = (x - b.cx, y - b.cy);
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= b.l / 2.0 && v.abs() <= b.w / 2.0
}

/// Monte Carlo BEV IoU: uniform samples over a square covering both boxes.
pub fn monte_carlo_bev_iou(a: &Box7, b: &Box7, samples: usize, rng: &mut impl Rng) -> f64 {
    let ra = 0.5 * a.l.hypot(a.w);
    let rb = 0.5 * b.l.hypot(b.w);
    let x0 = (a.cx - ra).min(b.cx - rb);
    let x1 = (a.cx + ra).max(b.cx + rb);
    let y0 = (a.cy - ra).min(b.cy - rb);
    let y1 = (a.cy + ra).max(b.cy + rb);
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let (ia, ib) = (inside_bev(a, x, y), inside_bev(b, x, y));
        both += usize::from(ia && ib);
        either += usize::from(ia || ib);
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// AP by the textbook definition: for every recall position r = i/40 take the
/// best precision among all cut-offs whose recall reaches r.
pub fn brute_force_ap(is_tp: &[bool], num_gt: usize) -> f64 {
    let mut sum = 0.0;
    for i in 1..=40 {
        let r = i as f64 / 40.0;
        let mut best = 0.0f64;
        for k in 0..is_tp.len() {
            let tp = is_tp[..=k].iter().filter(|t| **t).count();
            let recall = tp as f64 / num_gt as f64;
            let precision = tp as f64 / (k + 1) as f64;
            if recall >= r && precision > best {
                best = precision;
            }
        }
        sum += best;
    }
    sum / 40.0
}

/// Gauss–Hermite nodes and weights for ∫ e^{-x²} f(x) dx, by Golub–Welsch.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = off;
        j[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn log_normal_pdf(x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

/// `E_p[log p − log q]` by tensor-product Gauss–Hermite quadrature under p.
pub fn kl_quadrature(mu_p: &[f64], sig_p: &[f64], mu_q: &[f64], sig_q: &[f64], nodes: usize) -> f64 {
    let gh = gauss_hermite(nodes);
    let d = mu_p.len();
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let mut w = norm;
        let x: Vec<f64> = (0..d)
            .map(|k| {
                let (t, wt) = gh[idx[k]];
                w *= wt;
                mu_p[k] + std::f64::consts::SQRT_2 * sig_p[k] * t
            })
            .collect();
        total += w * (log_normal_pdf(&x, mu_p, sig_p) - log_normal_pdf(&x, mu_q, sig_q));
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Argmax of a 1D Gaussian mixture by dense grid search.
pub fn kde_grid_mode(values: &[f64], h: f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let d: f64 = values.iter().map(|v| (-(x - v).powi(2) / (2.0 * h * h)).exp()).sum();
        if d > best.0 {
            best = (d, x);
        }
    }
    best.1
}

pub fn random_frame(rng: &mut impl Rng, points: usize, boxes: usize) -> Frame {
    let deg = |r: f64| r.to_radians();
    Frame {
        platform: Platform::Drone,
        timestamp: rng.random_range(0.0..100.0),
        points: (0..points)
            .map(|_| {
                Point::new(
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-8.0..4.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect(),
        boxes: (0..boxes)
            .map(|_| {
                let mut b = random_box(rng);
                b.cx *= 10.0;
                b.cy *= 10.0;
                b
            })
            .collect(),
        pose: Pose::new(
            rng.random_range(-deg(20.0)..deg(20.0)),
            rng.random_range(-deg(20.0)..deg(20.0)),
            rng.random_range(-3.1..3.1),
            [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.3..8.0)],
        ),
    }
}

pub fn max_point_gap(a: &Frame, b: &Frame) -> f64 {
    let pts = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (p.xyz() - q.xyz()).norm());
    let ctr = a.boxes.iter().zip(&b.boxes).map(|(p, q)| (p.center() - q.center()).norm());
    pts.chain(ctr).fold(0.0, f64::max)
}

pub fn dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}
