//! Vehicle-to-drone adaptation on small synthetic splits: pre-adaptation,
//! pseudo labels, knowledge adaptation and held-out AP before and after.
//!
//!     cargo run --release --example adaptation -- [epochs] [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xplat3d::adapt::{run_adaptation, AdaptConfig, Stage};
use xplat3d::nnalign::OptimizerKind;
use xplat3d::synth::{generate_dataset, PlatformProfile, SceneSpec};

fn main() -> xplat3d::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = SceneSpec::default();
    let source = generate_dataset(&spec, &PlatformProfile::vehicle(), 6, 20, seed + 1)?;
    let train = generate_dataset(&spec, &PlatformProfile::drone(), 6, 20, seed + 2)?;
    let test = generate_dataset(&spec, &PlatformProfile::drone(), 3, 10, seed + 3)?;

    let cfg = AdaptConfig {
        epochs,
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        rpj_range: 3.0,
        seed,
        ..AdaptConfig::default()
    };
    let out = run_adaptation(&source, &train, &test, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;

    for stage in [Stage::PreAdapt, Stage::KaSource, Stage::KaTarget] {
        let t = out.trace.totals(stage);
        if let (Some(a), Some(b)) = (t.first(), t.last()) {
            println!("{:<16} steps {:>5}  loss {a:.3} -> {b:.3}", stage.name(), t.len());
        }
    }
    println!("pseudo labels: {}", out.pseudo.total());
    println!("held-out drone, pre-adapted:");
    for e in &out.pre_adapt_report.entries {
        println!("  {e}");
    }
    println!("held-out drone, adapted:");
    for e in &out.report.entries {
        println!("  {e}");
    }
    Ok(())
}
