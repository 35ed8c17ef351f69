//! Trains the jitter descriptor on level vehicle frames under random pitch
//! jitter and reports its roll/pitch error on held-out jittered frames.
//!
//!     cargo run --release --example jitter_descriptor -- [epochs] [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xplat3d::adapt::{estimate_jitter, pre_adapt, AdaptConfig, Mechanisms};
use xplat3d::geom::{apply_rpj, sample_rpj};
use xplat3d::nnalign::OptimizerKind;
use xplat3d::synth::{generate_dataset, PlatformProfile, SceneSpec};

fn main() -> xplat3d::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    // level platform so the applied jitter is the only tilt in the data
    let level = PlatformProfile {
        jitter_bound: 0.0,
        ..PlatformProfile::vehicle()
    };
    let spec = SceneSpec::default();
    let train = generate_dataset(&spec, &level, 10, 20, seed * 10 + 1)?;
    let test = generate_dataset(&spec, &level, 5, 10, seed * 10 + 2)?;

    let mut cfg = AdaptConfig::default().with_mechanisms(Mechanisms {
        rpj: true,
        gtd: true,
        ..Default::default()
    });
    cfg.epochs = epochs;
    cfg.rpj_range = 5.0;
    cfg.optimizer = OptimizerKind::Adam;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    let (model, _) = pre_adapt(&train, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let (mut err, mut n) = (0.0, 0.0);
    for f in &test {
        let truth = sample_rpj(5.0, &mut rng);
        let pred = estimate_jitter(&model, &apply_rpj(f, &truth)?, &cfg);
        err += (pred.delta_roll - truth.delta_roll).abs() + (pred.delta_pitch - truth.delta_pitch).abs();
        n += 2.0;
    }
    println!("held-out frames: {}", test.len());
    println!("mean absolute roll/pitch error: {:.3} deg", (err / n).to_degrees());
    Ok(())
}
