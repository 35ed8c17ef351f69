//! Pitch jitter, virtual-pose leveling and object scaling on one synthetic
//! drone frame.
//!
//!     cargo run --example geometry

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xplat3d::geom::{apply_rpj, apply_vpp, random_object_scaling, relative_pitch_and_range, undo_rpj, JitterSample};
use xplat3d::synth::{generate_sequence, PlatformProfile, SceneSpec};

fn main() -> xplat3d::Result<()> {
    let frame = generate_sequence(&SceneSpec::default(), &PlatformProfile::drone(), 1, 7)?.remove(0);
    let p = frame.pose;
    println!(
        "drone frame: {} points, {} boxes, roll {:.2} deg, pitch {:.2} deg, height {:.2} m",
        frame.points.len(),
        frame.boxes.len(),
        p.roll.to_degrees(),
        p.pitch.to_degrees(),
        p.t[2]
    );

    let j = JitterSample::new(3f64.to_radians(), -4f64.to_radians());
    let back = undo_rpj(&apply_rpj(&frame, &j)?, &j)?;
    let drift = frame
        .points
        .iter()
        .zip(&back.points)
        .map(|(a, b)| (a.xyz() - b.xyz()).norm())
        .fold(0.0, f64::max);
    println!("jitter then undo: max point drift {drift:.2e} m");

    let level = apply_vpp(&frame, 1.7);
    let theta = |f: &xplat3d::geom::Frame| -> f64 {
        let v: Vec<f64> = f
            .boxes
            .iter()
            .filter_map(|b| relative_pitch_and_range(b).ok().map(|x| x.0))
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    println!(
        "mean relative pitch: {:.2} deg raw, {:.2} deg after leveling",
        theta(&frame).to_degrees(),
        theta(&level).to_degrees()
    );

    let scaled = random_object_scaling(&frame, (0.9, 1.1), &mut ChaCha8Rng::seed_from_u64(1))?;
    for (a, b) in frame.boxes.iter().zip(&scaled.boxes).take(3) {
        println!("scaled box: length {:.2} -> {:.2} m", a.l, b.l);
    }
    Ok(())
}
