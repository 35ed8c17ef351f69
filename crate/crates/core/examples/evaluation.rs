//! Rotated-box IoU and 40-point average precision on a hand-made scene.
//!
//!     cargo run --example evaluation

use std::f64::consts::FRAC_PI_4;

use xplat3d::adapt::evaluate_boxes;
use xplat3d::geom::{Box7, ObjectClass};
use xplat3d::metrics::{average_precision, bev_iou, iou_3d, match_detections, IouMode};

fn car(x: f64, y: f64, heading: f64) -> Box7 {
    Box7::new([x, y, 0.8], [4.0, 1.8, 1.6], heading, ObjectClass::Vehicle)
}

fn main() -> xplat3d::Result<()> {
    let unit = |x: f64, h: f64| Box7::new([x, 0.0, 0.0], [1.0, 1.0, 1.0], h, ObjectClass::Vehicle);
    println!("half-shifted unit cubes: bev {:.4}", bev_iou(&unit(0.0, 0.0), &unit(0.5, 0.0)));
    println!("45 deg rotated unit cube: bev {:.4}", bev_iou(&unit(0.0, 0.0), &unit(0.0, FRAC_PI_4)));
    let lifted = Box7 { cz: 0.5, ..unit(0.0, 0.0) };
    println!("half-lifted unit cube: 3d {:.4}", iou_3d(&unit(0.0, 0.0), &lifted));

    let gts = vec![car(10.0, 0.0, 0.0), car(20.0, 4.0, 0.3), car(-15.0, -3.0, 1.2)];
    let dets = vec![
        car(10.2, 0.1, 0.02).with_score(0.9),
        car(20.5, 4.3, 0.25).with_score(0.8),
        car(0.0, 30.0, 0.0).with_score(0.7),
        car(-15.0, -3.0, 1.5).with_score(0.4),
    ];
    for thr in [0.7, 0.5] {
        let m = match_detections(&dets, &gts, thr, IouMode::ThreeD);
        let curve = average_precision(&m)?;
        println!("3d @{thr}: tp {}  fp {}  AP {:.4}", m.tp_count(), m.fp_count(), curve.ap);
    }

    let report = evaluate_boxes(&[dets], &[gts], &[ObjectClass::Vehicle])?;
    for e in &report.entries {
        println!("{e}");
    }
    Ok(())
}
