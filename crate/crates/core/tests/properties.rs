//! Randomized invariants over geometry, metrics, losses, fusion, tracking and
//! the file formats.

use std::f64::consts::PI;

use proptest::prelude::*;
use xplat3d::adapt::tracking::tracks_to_frames;
use xplat3d::adapt::{kbf_fuse, temporal_refine, FusionConfig, KbfParams};
use xplat3d::geom::{apply_rpj, wrap_angle, Box7, Frame, JitterSample, ObjectClass, Platform, Point, Pose};
use xplat3d::io::frame::{decode_frame, encode_frame};
use xplat3d::io::labels::{decode_labels, encode_labels};
use xplat3d::metrics::{average_precision, bev_iou, iou_3d, MatchResult};
use xplat3d::nnalign::losses::{kl_gaussian, GaussianParams};

fn arb_box() -> impl Strategy<Value = Box7> {
    (
        (-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64),
        (0.3..5.0f64, 0.3..3.0f64, 0.3..2.5f64),
        -PI..PI,
    )
        .prop_map(|((x, y, z), (l, w, h), t)| Box7::new([x, y, z], [l, w, h], t, ObjectClass::Vehicle))
}

fn arb_point() -> impl Strategy<Value = Point> {
    (-80.0..80.0f64, -80.0..80.0f64, -10.0..10.0f64, 0.0..1.0f64).prop_map(|(x, y, z, i)| Point::new(x, y, z, i))
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    (
        prop::collection::vec(arb_point(), 0..40),
        prop::collection::vec(arb_box(), 0..5),
        (-0.5..0.5f64, -0.5..0.5f64, -PI..PI),
        (-100.0..100.0f64, -100.0..100.0f64, 0.0..10.0f64),
        0.0..1000.0f64,
        0..3u8,
    )
        .prop_map(|(points, boxes, (r, p, y), (tx, ty, tz), ts, tag)| Frame {
            platform: Platform::from_tag(tag).unwrap(),
            timestamp: ts,
            points,
            boxes,
            pose: Pose::new(r, p, y, [tx, ty, tz]),
        })
}

fn arb_gaussian(dim: usize) -> impl Strategy<Value = GaussianParams> {
    (
        prop::collection::vec(-3.0..3.0f64, dim),
        prop::collection::vec(-2.0..2.0f64, dim),
    )
        .prop_map(|(m, s)| GaussianParams::new(m, s))
}

proptest! {
    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((a - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let (ab, ba) = (bev_iou(&a, &b), bev_iou(&b, &a));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        let v = iou_3d(&a, &b);
        prop_assert!((v - iou_3d(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        prop_assert!((bev_iou(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_is_invariant_to_a_shared_rigid_motion(a in arb_box(), b in arb_box(), t in -PI..PI, dx in -20.0..20.0f64) {
        let (s, c) = t.sin_cos();
        let mv = |q: &Box7| Box7 {
            cx: c * q.cx - s * q.cy + dx,
            cy: s * q.cx + c * q.cy,
            heading: wrap_angle(q.heading + t),
            ..*q
        };
        prop_assert!((bev_iou(&a, &b) - bev_iou(&mv(&a), &mv(&b))).abs() < 1e-9);
        prop_assert!((iou_3d(&a, &b) - iou_3d(&mv(&a), &mv(&b))).abs() < 1e-9);
    }

    #[test]
    fn ap_is_bounded_and_rewards_hits(flags in prop::collection::vec(any::<bool>(), 0..12), extra in 0..4usize) {
        let tp = flags.iter().filter(|f| **f).count();
        let num_gt = tp + extra;
        prop_assume!(num_gt > 0);
        let m = MatchResult { scores: vec![0.5; flags.len()], is_tp: flags.clone(), num_gt };
        let ap = average_precision(&m).unwrap().ap;
        prop_assert!((0.0..=1.0).contains(&ap));
        // turning the first false positive into a hit never lowers AP
        if let (Some(k), true) = (flags.iter().position(|f| !*f), extra > 0) {
            let mut better = flags.clone();
            better[k] = true;
            let m2 = MatchResult { is_tp: better, ..m };
            prop_assert!(average_precision(&m2).unwrap().ap >= ap);
        }
    }

    #[test]
    fn kl_is_non_negative(p in arb_gaussian(3), q in arb_gaussian(3)) {
        prop_assert!(kl_gaussian(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_gaussian(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rpj_is_rigid(f in arb_frame(), r in -0.7..0.7f64, p in -0.7..0.7f64) {
        let g = apply_rpj(&f, &JitterSample::new(r, p)).unwrap();
        for w in f.points.windows(2).zip(g.points.windows(2)) {
            let before = (w.0[0].xyz() - w.0[1].xyz()).norm();
            let after = (w.1[0].xyz() - w.1[1].xyz()).norm();
            prop_assert!((before - after).abs() < 1e-9);
        }
        for (a, b) in f.boxes.iter().zip(&g.boxes) {
            prop_assert_eq!((a.l, a.w, a.h, a.heading), (b.l, b.w, b.h, b.heading));
        }
    }

    #[test]
    fn kbf_output_stays_in_member_hull(
        members in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64, 0.9..1.1f64, -0.4..0.4f64, 0.1..1.0f64), 1..6),
        heading in -PI..PI,
    ) {
        let boxes: Vec<Box7> = members
            .iter()
            .map(|(dx, dy, s, dh, sc)| {
                Box7::new([10.0 + dx, -4.0 + dy, 0.8], [4.0 * s, 1.9 * s, 1.6], heading + dh, ObjectClass::Vehicle)
                    .with_score(*sc)
            })
            .collect();
        let ensemble: Vec<Vec<Box7>> = boxes.iter().map(|b| vec![*b]).collect();
        let fused = kbf_fuse(&ensemble, &KbfParams::from(&FusionConfig::default())).unwrap();
        for f in &fused {
            for get in [|b: &Box7| b.cx, |b: &Box7| b.cy, |b: &Box7| b.l, |b: &Box7| b.w] {
                let lo = boxes.iter().map(get).fold(f64::INFINITY, f64::min);
                let hi = boxes.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(get(f) >= lo - 1e-9 && get(f) <= hi + 1e-9);
            }
            let offs: Vec<f64> = boxes.iter().map(|b| wrap_angle(b.heading - heading)).collect();
            let v = wrap_angle(f.heading - heading);
            prop_assert!(v >= offs.iter().copied().fold(f64::INFINITY, f64::min) - 1e-9);
            prop_assert!(v <= offs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1e-9);
        }
    }

    #[test]
    fn tracking_keeps_observed_boxes(
        speed in -15.0..15.0f64,
        missing in prop::collection::vec(any::<bool>(), 6),
    ) {
        let frames: Vec<(f64, Vec<Box7>)> = (0..6)
            .map(|i| {
                let t = i as f64 * 0.1;
                let b = Box7::new([5.0 + speed * t, 2.0, 0.8], [4.0, 1.8, 1.6], 0.1, ObjectClass::Vehicle).with_score(0.7);
                (t, if missing[i] && i > 0 { Vec::new() } else { vec![b] })
            })
            .collect();
        let tracks = temporal_refine(&frames, 2).unwrap();
        for tr in &tracks {
            for o in tr.observations.iter().filter(|o| !o.interpolated) {
                prop_assert!(frames[o.frame].1.contains(&o.bbox));
            }
        }
        let per_frame = tracks_to_frames(&tracks, frames.len());
        for (i, (_, observed)) in frames.iter().enumerate() {
            for b in observed {
                prop_assert!(per_frame[i].contains(b));
            }
        }
    }

    #[test]
    fn frame_files_round_trip(f in arb_frame()) {
        let bytes = encode_frame(&f);
        let decoded = decode_frame(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(encode_frame(&decoded), bytes);
        prop_assert_eq!(decoded.points.len(), f.points.len());
        prop_assert_eq!(decoded.pose, f.pose);
    }

    #[test]
    fn label_files_round_trip(boxes in prop::collection::vec(arb_box(), 0..6), scored in any::<bool>()) {
        let boxes: Vec<Box7> = boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| if scored { b.with_score(i as f64 / 10.0) } else { b })
            .collect();
        let text = encode_labels(&boxes);
        let back = decode_labels(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &boxes);
        prop_assert_eq!(encode_labels(&back), text);
    }
}
