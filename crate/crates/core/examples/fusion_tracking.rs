//! Kernel-density box fusion over an ensemble of noisy detectors, then
//! temporal association that fills a missed frame.
//!
//!     cargo run --example fusion_tracking

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplat3d::adapt::tracking::tracks_to_frames;
use xplat3d::adapt::{kbf_fuse, temporal_refine, FusionConfig, KbfParams};
use xplat3d::geom::{Box7, ObjectClass};
use xplat3d::metrics::iou_3d;

fn main() -> xplat3d::Result<()> {
    let truth = Box7::new([12.0, 3.0, 0.8], [4.2, 1.8, 1.6], 0.4, ObjectClass::Vehicle);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut jitter = |b: &Box7| {
        let mut n = || rng.random_range(-0.25..0.25);
        Box7 {
            cx: b.cx + n(),
            cy: b.cy + n(),
            l: b.l * (1.0 + 0.3 * n()),
            heading: b.heading + 0.3 * n(),
            ..*b
        }
        .with_score(0.6 + n())
    };
    let ensemble: Vec<Vec<Box7>> = (0..5).map(|_| vec![jitter(&truth)]).collect();
    let fused = kbf_fuse(&ensemble, &KbfParams::from(&FusionConfig::default()))?;
    for (k, m) in ensemble.iter().enumerate() {
        println!("member {k}: 3d IoU with truth {:.3}", iou_3d(&m[0], &truth));
    }
    println!("fused:    3d IoU with truth {:.3}", iou_3d(&fused[0], &truth));

    // a car moving at 10 m/s, missed in frame 2
    let frames: Vec<(f64, Vec<Box7>)> = (0..5)
        .map(|i| {
            let t = i as f64 * 0.1;
            let b = Box7::new([10.0 + 10.0 * t, 0.0, 0.8], [4.2, 1.8, 1.6], 0.0, ObjectClass::Vehicle).with_score(0.8);
            (t, if i == 2 { Vec::new() } else { vec![b] })
        })
        .collect();
    let tracks = temporal_refine(&frames, 2)?;
    println!("tracks: {}", tracks.len());
    for (i, boxes) in tracks_to_frames(&tracks, frames.len()).iter().enumerate() {
        let xs: Vec<String> = boxes.iter().map(|b| format!("{:.2}", b.cx)).collect();
        println!("frame {i}: x = [{}]", xs.join(", "));
    }
    Ok(())
}
