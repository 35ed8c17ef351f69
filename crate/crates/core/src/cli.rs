//! The five commands behind the `xplat3d` binary. Each one reads its inputs,
//! writes its artifacts plus a `manifest.json` under the output directory and
//! is a pure function of (inputs, config, seed).

use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::config::AdaptConfig;
use crate::adapt::eval::{ap_entry, evaluate_model, EvalReport};
use crate::adapt::pseudo::{fuse_pseudo_labels, generate_pseudo_labels, refine_pseudo_labels, PseudoLabelSet};
use crate::adapt::train::{knowledge_adapt, pre_adapt_with_snapshots};
use crate::error::{Error, Result};
use crate::geom::{apply_rpj, apply_vpp, random_object_scaling, sample_rpj, Box7, Frame, ObjectClass};
use crate::io::dataset::{self, group_sequences, label_path, read_label_dir, FrameRecord};
use crate::io::labels::write_labels;
use crate::io::manifest::{RunManifest, MANIFEST_FILE};
use crate::io::{read_dataset, read_json, write_dataset, write_json};
use crate::metrics::IouMode;
use crate::nnalign::checkpoint;
use crate::stats::{box_pitch_range_scatter, ego_motion_stats, elevation_histogram, DistributionSummary, Histogram};
use crate::synth::{derive_seed, generate_sequence, PlatformProfile, SceneSpec};

/// Flags shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions {
    pub config: Option<PathBuf>,
    /// Overrides the seed stored in the config.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: usize,
}

impl GlobalOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            config: None,
            seed: None,
            out: out.into(),
            threads: 1,
        }
    }

    fn load_config<T: for<'de> Deserialize<'de> + Default>(&self) -> Result<T> {
        match &self.config {
            Some(p) => read_json(p),
            None => Ok(T::default()),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn finish_manifest(mut manifest: RunManifest, out: &Path, outputs: &[PathBuf]) -> Result<RunManifest> {
    manifest.add_outputs(out, outputs)?;
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub scene: SceneSpec,
    /// One output directory (named after the platform) per profile.
    pub platforms: Vec<PlatformProfile>,
    pub sequences: usize,
    pub frames_per_sequence: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneSpec::default(),
            platforms: vec![
                PlatformProfile::vehicle(),
                PlatformProfile::drone(),
                PlatformProfile::quadruped(),
            ],
            sequences: 1,
            frames_per_sequence: 10,
        }
    }
}

/// Writes `<out>/<platform>/<sequence>_<frame>.{pi3f,json}` for every profile.
pub fn cmd_synth(g: &GlobalOptions) -> Result<RunManifest> {
    let mut cfg: SynthConfig = g.load_config()?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let out = g.out_dir()?;
    let mut manifest = RunManifest::new("synth", cfg.seed, &cfg);
    if let Some(p) = &g.config {
        manifest.add_inputs(p)?;
    }
    let mut outputs = Vec::new();
    for (pi, profile) in cfg.platforms.iter().enumerate() {
        let platform_seed = derive_seed(cfg.seed, pi as u64);
        let seqs: Vec<u64> = (0..cfg.sequences).map(|k| derive_seed(platform_seed, k as u64)).collect();
        let frames = crate::parallel::map(&seqs, |&s| generate_sequence(&cfg.scene, profile, cfg.frames_per_sequence, s));
        let mut records = Vec::new();
        for (k, seq) in frames.into_iter().enumerate() {
            for (i, frame) in seq?.into_iter().enumerate() {
                records.push(FrameRecord {
                    id: dataset::frame_id(k, i),
                    frame,
                });
            }
        }
        let dir = out.join(profile.platform.name());
        outputs.extend(write_dataset(&dir, &records)?);
    }
    finish_manifest(manifest, out, &outputs)
}

// ---------------------------------------------------------------- augment

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    Rpj,
    Vpp,
    Ros,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    /// RPJ bound in degrees.
    pub rpj_range: f64,
    pub vehicle_height: f64,
    pub ros_range: [f64; 2],
}

impl Default for AugmentParams {
    fn default() -> Self {
        let c = AdaptConfig::default();
        Self {
            rpj_range: c.rpj_range,
            vehicle_height: c.vehicle_height,
            ros_range: c.ros_range,
        }
    }
}

/// Streams every frame of `input` through one geometric transform. Frame `i`
/// draws its randomness from `derive_seed(seed, i)`.
pub fn cmd_augment(g: &GlobalOptions, input: &Path, mode: AugmentMode, params: &AugmentParams) -> Result<RunManifest> {
    let seed = g.seed.unwrap_or(0);
    let records = read_dataset(input)?;
    let out = g.out_dir()?;
    let mut manifest = RunManifest::new("augment", seed, &serde_json::json!({ "mode": mode, "params": params }));
    manifest.add_inputs(input)?;
    let indexed: Vec<(usize, &FrameRecord)> = records.iter().enumerate().collect();
    let transformed = crate::parallel::map(&indexed, |(i, r)| -> Result<FrameRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, *i as u64));
        let frame = match mode {
            AugmentMode::Rpj => apply_rpj(&r.frame, &sample_rpj(params.rpj_range, &mut rng))?,
            AugmentMode::Vpp => apply_vpp(&r.frame, params.vehicle_height),
            AugmentMode::Ros => random_object_scaling(&r.frame, (params.ros_range[0], params.ros_range[1]), &mut rng)?,
        };
        Ok(FrameRecord { id: r.id.clone(), frame })
    });
    let transformed: Vec<FrameRecord> = transformed.into_iter().collect::<Result<_>>()?;
    let outputs = write_dataset(out, &transformed)?;
    finish_manifest(manifest, out, &outputs)
}

// ---------------------------------------------------------------- eval

/// Pairs detection and ground-truth label files by frame id; any id present
/// on one side only is an input error.
pub fn load_label_pairs(dets: &Path, gts: &Path) -> Result<(Vec<String>, Vec<Vec<Box7>>, Vec<Vec<Box7>>)> {
    let d = read_label_dir(dets)?;
    let t = read_label_dir(gts)?;
    let d_ids: Vec<&String> = d.iter().map(|(id, _)| id).collect();
    let t_ids: Vec<&String> = t.iter().map(|(id, _)| id).collect();
    if d_ids != t_ids {
        let missing: Vec<&&String> = t_ids.iter().filter(|i| !d_ids.contains(i)).collect();
        let extra: Vec<&&String> = d_ids.iter().filter(|i| !t_ids.contains(i)).collect();
        return Err(Error::InputMismatch(format!(
            "frame ids differ: {} without detections, {} without ground truth (first: {:?} / {:?})",
            missing.len(),
            extra.len(),
            missing.first(),
            extra.first()
        )));
    }
    if t.is_empty() {
        return Err(Error::EmptyInput(format!("no label files in {}", gts.display())));
    }
    let ids = t.iter().map(|(id, _)| id.clone()).collect();
    Ok((ids, d.into_iter().map(|(_, b)| b).collect(), t.into_iter().map(|(_, b)| b).collect()))
}

/// Per-class BEV and 3D AP of detection labels against ground-truth labels,
/// at 0.7 and 0.5 unless one threshold is given, optionally restricted to one
/// IoU mode. Classes are those present in the ground truth.
pub fn evaluate_label_dirs(dets: &Path, gts: &Path, iou: Option<f64>, mode: Option<IouMode>) -> Result<EvalReport> {
    let (_, d, t) = load_label_pairs(dets, gts)?;
    if let Some(thr) = iou {
        if !(thr > 0.0 && thr <= 1.0) {
            return Err(Error::InvalidArgument(format!("IoU threshold {thr} outside (0, 1]")));
        }
    }
    let mut entries = Vec::new();
    for class in ObjectClass::ALL {
        if !t.iter().flatten().any(|b| b.class == class) {
            continue;
        }
        let thresholds = match iou {
            Some(thr) => vec![thr],
            None => vec![0.7, 0.5],
        };
        for thr in thresholds {
            for m in [IouMode::Bev, IouMode::ThreeD] {
                if mode.is_none_or(|x| x == m) {
                    entries.push(ap_entry(&d, &t, class, m, thr)?);
                }
            }
        }
    }
    Ok(EvalReport { entries })
}

pub fn cmd_eval(g: &GlobalOptions, dets: &Path, gts: &Path, iou: Option<f64>, mode: Option<IouMode>) -> Result<EvalReport> {
    let report = evaluate_label_dirs(dets, gts, iou, mode)?;
    let out = g.out_dir()?;
    let mut manifest = RunManifest::new("eval", g.seed.unwrap_or(0), &serde_json::json!({ "iou": iou, "mode": mode }));
    manifest.add_inputs(dets)?;
    manifest.add_inputs(gts)?;
    let path = out.join("report.json");
    write_json(&path, &report)?;
    finish_manifest(manifest, out, &[path])?;
    Ok(report)
}

// ---------------------------------------------------------------- adapt

/// Frame-index ranges of the target training and held-out splits. With two or
/// more sequences the last `ceil(holdout · n)` sequences are held out;
/// a single sequence is split by frame count.
pub fn holdout_split(records: &[FrameRecord], holdout: f64) -> Result<(Range<usize>, Range<usize>)> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::InvalidArgument(format!("holdout fraction {holdout} outside (0, 1)")));
    }
    let seqs = group_sequences(records);
    let n = records.len();
    let cut = if seqs.len() >= 2 {
        let k = ((holdout * seqs.len() as f64).ceil() as usize).clamp(1, seqs.len() - 1);
        seqs[seqs.len() - k].start
    } else {
        let k = ((holdout * n as f64).ceil() as usize).clamp(1, n.max(2) - 1);
        n - k
    };
    if cut == 0 || cut >= n {
        return Err(Error::EmptyInput("target set too small to hold out a split".into()));
    }
    Ok((0..cut, cut..n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptReport {
    pub seed: u64,
    pub mechanisms: String,
    pub source_frames: usize,
    pub target_train_frames: usize,
    pub target_test_frames: usize,
    pub pseudo_labels: usize,
    pub pre_adapt: EvalReport,
    pub adapted: EvalReport,
}

/// Pre-adaptation on `source`, pseudo labels on the target training split
/// (optionally fused across checkpoints and refined over time), knowledge
/// adaptation, and evaluation of both models on the held-out target split.
pub fn cmd_adapt(g: &GlobalOptions, source: &Path, target: &Path, holdout: f64) -> Result<AdaptReport> {
    let mut cfg: AdaptConfig = g.load_config()?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let src: Vec<Frame> = read_dataset(source)?.into_iter().map(|r| r.frame).collect();
    let tgt = read_dataset(target)?;
    let (train, test) = holdout_split(&tgt, holdout)?;
    // the training split is unlabeled as far as adaptation is concerned
    let train_records = &tgt[train.clone()];
    let train_frames: Vec<Frame> = train_records
        .iter()
        .map(|r| Frame {
            boxes: Vec::new(),
            ..r.frame.clone()
        })
        .collect();
    let test_frames: Vec<Frame> = tgt[test].iter().map(|r| r.frame.clone()).collect();

    let out = g.out_dir()?;
    let mut manifest = RunManifest::new("adapt", cfg.seed, &cfg);
    manifest.add_inputs(source)?;
    manifest.add_inputs(target)?;
    let mut outputs = Vec::new();
    let meta = serde_json::to_string(&cfg).expect("config serializes");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keep = if cfg.use_kbf { cfg.fusion.checkpoints } else { 0 };
    let (pre, pre_trace, snapshots) = pre_adapt_with_snapshots(&src, &cfg, keep, &mut rng)?;
    let p = out.join("pre_adapt.ckpt");
    checkpoint::save(&pre, &meta, &p)?;
    outputs.push(p);

    let mut pseudo = generate_pseudo_labels(&pre, &train_frames, &cfg);
    if cfg.use_kbf && !snapshots.is_empty() {
        let sets: Vec<PseudoLabelSet> = snapshots
            .iter()
            .map(|m| generate_pseudo_labels(m, &train_frames, &cfg))
            .collect();
        pseudo = fuse_pseudo_labels(&sets, &train_frames, &cfg)?;
    }
    if cfg.use_temporal {
        pseudo = refine_pseudo_labels(&pseudo, &train_frames, &group_sequences(train_records), &cfg)?;
    }
    let pdir = out.join("pseudo_labels");
    std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    for (r, boxes) in train_records.iter().zip(&pseudo.frames) {
        let lp = label_path(&pdir, &r.id);
        write_labels(&lp, boxes)?;
        outputs.push(lp);
    }
    let pp = pdir.join("provenance.json");
    write_json(&pp, &pseudo.provenance)?;
    outputs.push(pp);

    let (model, ka_trace) = knowledge_adapt(pre.clone(), &src, &train_frames, &pseudo, &cfg, &mut rng)?;
    let p = out.join("model.ckpt");
    checkpoint::save(&model, &meta, &p)?;
    outputs.push(p);
    let mut trace = pre_trace;
    trace.extend(&ka_trace);
    let p = out.join("loss_trace.csv");
    std::fs::write(&p, trace.to_csv()).map_err(|e| Error::io(&p, e))?;
    outputs.push(p);

    let report = AdaptReport {
        seed: cfg.seed,
        mechanisms: cfg.mechanisms().label(),
        source_frames: src.len(),
        target_train_frames: train_frames.len(),
        target_test_frames: test_frames.len(),
        pseudo_labels: pseudo.total(),
        pre_adapt: evaluate_model(&pre, &test_frames, &cfg)?,
        adapted: evaluate_model(&model, &test_frames, &cfg)?,
    };
    let p = out.join("report.json");
    write_json(&p, &report)?;
    outputs.push(p);
    finish_manifest(manifest, out, &outputs)?;
    Ok(report)
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub elevation_bins: usize,
    pub elevation_range: [f64; 2],
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            elevation_bins: 40,
            elevation_range: [-10.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgoMotion {
    pub roll: DistributionSummary,
    pub pitch: DistributionSummary,
}

/// Discrepancy statistics of one frame directory; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub frames: usize,
    pub points: usize,
    pub boxes: usize,
    pub elevation: Histogram,
    pub ego_motion: EgoMotion,
    /// Summary of the relative pitch θ^r over all boxes; `None` without boxes.
    pub relative_pitch: Option<DistributionSummary>,
    pub range: Option<DistributionSummary>,
}

pub fn compute_stats(frames: &[Frame], cfg: &StatsConfig) -> Result<(StatsReport, Vec<(f64, f64)>)> {
    let elevation = elevation_histogram(frames, cfg.elevation_bins, (cfg.elevation_range[0], cfg.elevation_range[1]))?;
    let (roll, pitch) = ego_motion_stats(frames)?;
    let scatter = box_pitch_range_scatter(frames);
    let summary = |vals: Vec<f64>| DistributionSummary::from_samples(vals).ok();
    let report = StatsReport {
        frames: frames.len(),
        points: frames.iter().map(|f| f.points.len()).sum(),
        boxes: frames.iter().map(|f| f.boxes.len()).sum(),
        elevation,
        ego_motion: EgoMotion { roll, pitch },
        relative_pitch: summary(scatter.iter().map(|s| s.1).collect()),
        range: summary(scatter.iter().map(|s| s.0).collect()),
    };
    Ok((report, scatter))
}

/// Writes `stats.json` and `scatter.csv` (`range,relative_pitch` per box).
pub fn cmd_stats(g: &GlobalOptions, input: &Path) -> Result<StatsReport> {
    let cfg: StatsConfig = g.load_config()?;
    let frames: Vec<Frame> = read_dataset(input)?.into_iter().map(|r| r.frame).collect();
    let (report, scatter) = compute_stats(&frames, &cfg)?;
    let out = g.out_dir()?;
    let mut manifest = RunManifest::new("stats", g.seed.unwrap_or(0), &cfg);
    manifest.add_inputs(input)?;
    let jp = out.join("stats.json");
    write_json(&jp, &report)?;
    let mut csv = String::from("range,relative_pitch\n");
    for (rho, theta) in &scatter {
        csv += &format!("{rho:e},{theta:e}\n");
    }
    let cp = out.join("scatter.csv");
    std::fs::write(&cp, csv).map_err(|e| Error::io(&cp, e))?;
    finish_manifest(manifest, out, &[jp, cp])?;
    Ok(report)
}

/// Process exit code for an error: 2 usage, 3 input, 4 numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}
