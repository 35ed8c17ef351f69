//! End-to-end behaviour of the commands, through the library entry points and
//! through the binary for exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use xplat3d::adapt::AdaptConfig;
use xplat3d::cli::{self, AugmentMode, AugmentParams, GlobalOptions, StatsConfig, SynthConfig};
use xplat3d::geom::{Box7, ObjectClass};
use xplat3d::io::{read_dataset, read_frame, read_labels, write_frame, write_labels};
use xplat3d::nnalign::checkpoint;
use xplat3d::synth::{PlatformProfile, SceneSpec};
use xplat3d::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xplat3d"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn write_config(dir: &Path, name: &str, value: &impl serde::Serialize) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn small_synth(dir: &Path, platforms: Vec<PlatformProfile>, sequences: usize, frames: usize, seed: u64) -> PathBuf {
    let cfg = SynthConfig {
        seed,
        platforms,
        sequences,
        frames_per_sequence: frames,
        ..SynthConfig::default()
    };
    let out = dir.join(format!("synth_{seed}"));
    let g = GlobalOptions {
        config: Some(write_config(dir, &format!("synth_{seed}.json"), &cfg)),
        ..GlobalOptions::new(&out)
    };
    cli::cmd_synth(&g).unwrap();
    out
}

#[test]
fn synth_without_objects_gives_ground_only_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        scene: SceneSpec {
            vehicle_count: (0, 0),
            pedestrian_count: (0, 0),
            ..SceneSpec::default()
        },
        platforms: vec![PlatformProfile::vehicle()],
        sequences: 1,
        frames_per_sequence: 2,
        ..SynthConfig::default()
    };
    let g = GlobalOptions {
        config: Some(write_config(tmp.path(), "c.json", &cfg)),
        ..GlobalOptions::new(tmp.path().join("out"))
    };
    cli::cmd_synth(&g).unwrap();
    let recs = read_dataset(&tmp.path().join("out/vehicle")).unwrap();
    assert_eq!(recs.len(), 2);
    for r in &recs {
        assert!(r.frame.boxes.is_empty());
        assert!(!r.frame.points.is_empty());
    }
}

#[test]
fn synth_is_reproducible_across_output_dirs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        sequences: 2,
        frames_per_sequence: 2,
        ..SynthConfig::default()
    };
    let c = write_config(tmp.path(), "c.json", &cfg);
    let run = |name: &str, threads: usize| {
        let out = tmp.path().join(name);
        let g = GlobalOptions {
            config: Some(c.clone()),
            seed: Some(7),
            threads,
            ..GlobalOptions::new(&out)
        };
        cli::cmd_synth(&g).unwrap();
        tree(&out)
    };
    let a = run("a", 1);
    let b = run("b", 3);
    assert_eq!(a, b);
    assert!(a.keys().any(|k| k.starts_with("drone")));
    let mut g = GlobalOptions::new(tmp.path().join("c"));
    g.seed = Some(8);
    g.config = Some(c);
    cli::cmd_synth(&g).unwrap();
    assert_ne!(a, tree(&tmp.path().join("c")));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.json");
    std::fs::write(&p, r#"{"sequences": 1, "frames": 3}"#).unwrap();
    let g = GlobalOptions {
        config: Some(p.clone()),
        ..GlobalOptions::new(tmp.path().join("out"))
    };
    assert!(cli::cmd_synth(&g).is_err());
    let status = bin()
        .args(["synth", "--config", p.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("out2"))
        .status()
        .unwrap();
    assert_ne!(status.code(), Some(0));
}

fn augment(input: &Path, out: &Path, mode: AugmentMode, params: AugmentParams) -> Vec<xplat3d::io::FrameRecord> {
    let mut g = GlobalOptions::new(out);
    g.seed = Some(3);
    cli::cmd_augment(&g, input, mode, &params).unwrap();
    read_dataset(out).unwrap()
}

#[test]
fn augment_identity_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = small_synth(tmp.path(), vec![PlatformProfile::drone()], 1, 2, 1);
    let input = synth.join("drone");
    let orig = read_dataset(&input).unwrap();

    let no_jitter = AugmentParams {
        rpj_range: 0.0,
        ..AugmentParams::default()
    };
    let rpj = augment(&input, &tmp.path().join("rpj"), AugmentMode::Rpj, no_jitter);
    for (a, b) in orig.iter().zip(&rpj) {
        for (p, q) in a.frame.points.iter().zip(&b.frame.points) {
            assert!((p.xyz() - q.xyz()).norm() < 1e-9);
        }
    }

    let unit = AugmentParams {
        ros_range: [1.0, 1.0],
        ..AugmentParams::default()
    };
    let ros = augment(&input, &tmp.path().join("ros"), AugmentMode::Ros, unit);
    for (a, b) in orig.iter().zip(&ros) {
        assert_eq!(a.frame.points.len(), b.frame.points.len());
        for (p, q) in a.frame.points.iter().zip(&b.frame.points) {
            assert!((p.xyz() - q.xyz()).norm() < 1e-9);
        }
        for (p, q) in a.frame.boxes.iter().zip(&b.frame.boxes) {
            assert!((p.l - q.l).abs() < 1e-12 && (p.w - q.w).abs() < 1e-12 && (p.h - q.h).abs() < 1e-12);
        }
    }

    let once_dir = tmp.path().join("vpp1");
    let once = augment(&input, &once_dir, AugmentMode::Vpp, AugmentParams::default());
    let twice = augment(&once_dir, &tmp.path().join("vpp2"), AugmentMode::Vpp, AugmentParams::default());
    assert_eq!(once, twice);
    assert_ne!(once[0].frame.pose, orig[0].frame.pose);
}

#[test]
fn augment_unknown_mode_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["augment", "--mode", "shear", "--input"])
        .arg(tmp.path())
        .arg("--out")
        .arg(tmp.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["synth", "--threads", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

fn label_dir(dir: &Path, frames: &[Vec<Box7>]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    for (i, boxes) in frames.iter().enumerate() {
        write_labels(&dir.join(format!("000_{i:04}.json")), boxes).unwrap();
    }
    dir.to_path_buf()
}

fn car(x: f64, y: f64) -> Box7 {
    Box7::new([x, y, 0.85], [4.5, 1.9, 1.7], 0.3, ObjectClass::Vehicle)
}

#[test]
fn eval_perfect_empty_and_mismatched() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = vec![vec![car(5.0, 1.0), car(-8.0, 4.0)], vec![car(12.0, -3.0)]];
    let gts = label_dir(&tmp.path().join("gt"), &gt);
    let scored: Vec<Vec<Box7>> = gt.iter().map(|f| f.iter().map(|b| b.with_score(0.9)).collect()).collect();
    let dets = label_dir(&tmp.path().join("det"), &scored);

    let report = cli::cmd_eval(&GlobalOptions::new(tmp.path().join("o")), &dets, &gts, None, None).unwrap();
    assert_eq!(report.entries.len(), 4);
    for e in &report.entries {
        assert_eq!(e.ap, Some(1.0), "{e}");
    }
    assert!(tmp.path().join("o/report.json").exists());

    let empty = label_dir(&tmp.path().join("empty"), &[vec![], vec![]]);
    let report = cli::evaluate_label_dirs(&empty, &gts, Some(0.5), None).unwrap();
    assert!(report.entries.iter().all(|e| e.ap == Some(0.0)));

    let short = label_dir(&tmp.path().join("short"), &scored[..1]);
    let err = cli::evaluate_label_dirs(&short, &gts, None, None).unwrap_err();
    assert!(matches!(err, Error::InputMismatch(_)));
    assert_eq!(cli::exit_code(&err), 3);
    let status = bin()
        .arg("eval")
        .arg("--dets")
        .arg(&short)
        .arg("--gts")
        .arg(&gts)
        .arg("--out")
        .arg(tmp.path().join("o2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(matches!(
        cli::evaluate_label_dirs(&dets, &gts, Some(1.5), None),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn adapt_without_training_writes_a_finite_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = small_synth(tmp.path(), vec![PlatformProfile::vehicle(), PlatformProfile::drone()], 2, 2, 4);
    let cfg = AdaptConfig {
        epochs: 0,
        ..AdaptConfig::default()
    };
    let out = tmp.path().join("adapt");
    let g = GlobalOptions {
        config: Some(write_config(tmp.path(), "a.json", &cfg)),
        ..GlobalOptions::new(&out)
    };
    let report = cli::cmd_adapt(&g, &synth.join("vehicle"), &synth.join("drone"), 0.5).unwrap();
    assert_eq!(report.source_frames, 4);
    assert_eq!(report.target_train_frames + report.target_test_frames, 4);
    let (model, _) = checkpoint::load(&out.join("model.ckpt")).unwrap();
    let bytes = std::fs::read(out.join("model.ckpt")).unwrap();
    assert_eq!(checkpoint::encode(&model, &checkpoint::load(&out.join("model.ckpt")).unwrap().1), bytes);
    let trace = std::fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    for line in trace.lines().skip(1) {
        for field in line.split(',') {
            if let Ok(v) = field.parse::<f64>() {
                assert!(v.is_finite(), "{line}");
            }
        }
    }
    for e in report.pre_adapt.entries.iter().chain(&report.adapted.entries) {
        assert!(e.ap.is_none_or(|a| (0.0..=1.0).contains(&a)));
    }
}

#[test]
fn stats_on_drone_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = small_synth(tmp.path(), vec![PlatformProfile::drone()], 1, 3, 2);
    let out = tmp.path().join("stats");
    let report = cli::cmd_stats(&GlobalOptions::new(&out), &synth.join("drone")).unwrap();
    assert_eq!(report.frames, 3);
    assert!(report.relative_pitch.as_ref().unwrap().mean < 0.0);
    let csv = std::fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("range,relative_pitch"));
    assert_eq!(csv.lines().count(), report.boxes + 1);

    let one = read_dataset(&synth.join("drone")).unwrap();
    let (single, _) = cli::compute_stats(&one[..1].iter().map(|r| r.frame.clone()).collect::<Vec<_>>(), &StatsConfig::default()).unwrap();
    assert_eq!(single.frames, 1);
    assert_eq!(single.points, one[0].frame.points.len());
    assert_eq!(single.boxes, one[0].frame.boxes.len());
    assert!(single.elevation.total() > 0 && single.elevation.total() <= single.points);
}

#[test]
fn files_round_trip_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = small_synth(tmp.path(), vec![PlatformProfile::quadruped()], 1, 1, 9);
    let src = std::fs::read_dir(synth.join("quadruped")).unwrap();
    for e in src {
        let p = e.unwrap().path();
        let copy = tmp.path().join("copy").join(p.file_name().unwrap());
        std::fs::create_dir_all(copy.parent().unwrap()).unwrap();
        match p.extension().and_then(|x| x.to_str()) {
            Some("pi3f") => write_frame(&copy, &read_frame(&p).unwrap()).unwrap(),
            Some("json") => write_labels(&copy, &read_labels(&p).unwrap()).unwrap(),
            _ => continue,
        }
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&copy).unwrap(), "{}", p.display());
    }

    let model = xplat3d::nnalign::AdaptModel::new(xplat3d::nnalign::ModelDims::default(), 5);
    let a = tmp.path().join("a.ckpt");
    checkpoint::save(&model, "meta", &a).unwrap();
    let (back, meta) = checkpoint::load(&a).unwrap();
    let b = tmp.path().join("b.ckpt");
    checkpoint::save(&back, &meta, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
