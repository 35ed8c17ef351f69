//! Synthesizes a few sequences per platform and prints the discrepancy
//! statistics: elevation spread, ego roll/pitch and target relative pitch.
//!
//!     cargo run --release --example synth_stats

use xplat3d::cli::{compute_stats, StatsConfig};
use xplat3d::synth::{generate_dataset, PlatformProfile, SceneSpec};

fn main() -> xplat3d::Result<()> {
    let spec = SceneSpec::default();
    for (i, profile) in [PlatformProfile::vehicle(), PlatformProfile::drone(), PlatformProfile::quadruped()]
        .iter()
        .enumerate()
    {
        let frames = generate_dataset(&spec, profile, 3, 10, 40 + i as u64)?;
        let (s, _) = compute_stats(&frames, &StatsConfig::default())?;
        let theta = s.relative_pitch.as_ref().map_or(f64::NAN, |t| t.mean.to_degrees());
        println!(
            "{:<10} frames {:>3}  points {:>6}  boxes {:>4}  elevation mean {:>6.2} m  |pitch| sd {:>5.2} deg  mean relative pitch {:>6.2} deg",
            profile.platform.name(),
            s.frames,
            s.points,
            s.boxes,
            s.elevation.center_mean().unwrap_or(f64::NAN),
            s.ego_motion.pitch.variance.sqrt().to_degrees(),
            theta
        );
    }
    Ok(())
}
