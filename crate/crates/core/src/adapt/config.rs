use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnalign::{ModelDims, OptimizerKind};

/// Axis-aligned crop applied in the detector frame (ground near `z = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for DetectionRange {
    fn default() -> Self {
        Self {
            x: [-75.2, 75.2],
            y: [-75.2, 75.2],
            z: [-2.0, 4.0],
        }
    }
}

impl DetectionRange {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (self.x[0]..=self.x[1]).contains(&p[0])
            && (self.y[0]..=self.y[1]).contains(&p[1])
            && (self.z[0]..=self.z[1]).contains(&p[2])
    }
}

/// Candidate-region generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    /// Minimum height above the fitted ground for a point to be clustered.
    pub min_height: f64,
    pub max_height: f64,
    /// Ground-fit cell size.
    pub ground_cell: f64,
    /// Clustering grid cell size (8-connected).
    pub cluster_cell: f64,
    pub min_points: usize,
    pub max_extent: f64,
    pub max_regions: usize,
    /// Anchor dimensions (l, w, h).
    pub anchor_dims: [f64; 3],
    /// BEV IoU for an anchor to count as foreground.
    pub fg_iou: f64,
    /// BEV IoU defining the RoI classifier label.
    pub roi_iou: f64,
    pub nms_iou: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            min_height: 0.25,
            max_height: 4.0,
            ground_cell: 2.0,
            cluster_cell: 0.6,
            min_points: 5,
            max_extent: 8.0,
            max_regions: 32,
            anchor_dims: [4.5, 1.9, 1.7],
            fg_iou: 0.3,
            roi_iou: 0.5,
            nms_iou: 0.1,
        }
    }
}

/// Settings of the box-fusion and temporal-refinement stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Kernel bandwidth per box parameter (cx, cy, cz, l, w, h, heading).
    pub bandwidth: [f64; 7],
    pub min_support: usize,
    pub cluster_iou: f64,
    pub grid_points: usize,
    pub max_gap: usize,
    /// Number of trailing pre-adaptation epoch checkpoints whose pseudo
    /// labels are fused.
    pub checkpoints: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            bandwidth: [0.5, 0.5, 0.3, 0.3, 0.2, 0.2, 0.2],
            min_support: 1,
            cluster_iou: 0.3,
            grid_points: 201,
            max_gap: 2,
            checkpoints: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub lambda_rot: f64,
    pub lambda_roi: f64,
    pub lambda_kl: f64,
    /// Jitter bound in degrees.
    pub rpj_range: f64,
    pub pseudo_score_threshold: f64,
    pub detection_range: DetectionRange,
    pub voxel_size: [f64; 3],
    /// Pre-adaptation epochs.
    pub epochs: usize,
    /// Knowledge-adaptation epochs; `None` uses `epochs`.
    pub ka_epochs: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub use_rpj: bool,
    pub use_vpp: bool,
    /// Channel-attention residual from the jitter descriptor on the target branch.
    pub use_gtd_residual: bool,
    pub use_ros: bool,
    pub ros_range: [f64; 2],
    /// Fuse pseudo labels across pre-adaptation checkpoints.
    pub use_kbf: bool,
    /// Track pseudo labels through target sequences and fill short gaps.
    pub use_temporal: bool,
    /// Sensor height of the virtual level platform.
    pub vehicle_height: f64,
    /// Blend the RoI foreground probability into detection scores when the
    /// RoI classifier is trained.
    pub roi_rescoring: bool,
    pub model: ModelDims,
    pub proposals: ProposalConfig,
    pub fusion: FusionConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lambda_rot: 0.1,
            lambda_roi: 0.2,
            lambda_kl: 1e-4,
            rpj_range: 5.0,
            pseudo_score_threshold: 0.2,
            detection_range: DetectionRange::default(),
            voxel_size: [0.1, 0.1, 0.15],
            epochs: 4,
            ka_epochs: None,
            batch_size: 1,
            learning_rate: 0.01,
            clip_norm: 5.0,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            use_rpj: true,
            use_vpp: true,
            use_gtd_residual: true,
            use_ros: false,
            ros_range: [0.9, 1.1],
            use_kbf: false,
            use_temporal: false,
            vehicle_height: 1.7,
            roi_rescoring: false,
            model: ModelDims::default(),
            proposals: ProposalConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

/// Which adaptation mechanisms are switched on (one row of the component ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Mechanisms {
    pub rpj: bool,
    pub vpp: bool,
    pub pfa: bool,
    pub gtd: bool,
}

impl Mechanisms {
    pub const ALL: Self = Self {
        rpj: true,
        vpp: true,
        pfa: true,
        gtd: true,
    };

    pub fn label(&self) -> String {
        let mut parts = vec!["base"];
        for (on, name) in [(self.rpj, "rpj"), (self.vpp, "vpp"), (self.pfa, "pfa"), (self.gtd, "gtd")] {
            if on {
                parts.push(name);
            }
        }
        parts.join("+")
    }
}

impl AdaptConfig {
    pub fn ka_epochs(&self) -> usize {
        self.ka_epochs.unwrap_or(self.epochs)
    }

    /// Copy with the ablation switches applied. PFA off zeroes both
    /// probabilistic weights; GTD off zeroes the rotation weight and the residual.
    pub fn with_mechanisms(&self, m: Mechanisms) -> Self {
        let d = Self::default();
        let mut c = self.clone();
        c.use_rpj = m.rpj;
        c.use_vpp = m.vpp;
        c.lambda_roi = if m.pfa { pick(self.lambda_roi, d.lambda_roi) } else { 0.0 };
        c.lambda_kl = if m.pfa { pick(self.lambda_kl, d.lambda_kl) } else { 0.0 };
        c.lambda_rot = if m.gtd { pick(self.lambda_rot, d.lambda_rot) } else { 0.0 };
        c.use_gtd_residual = m.gtd;
        c
    }

    pub fn mechanisms(&self) -> Mechanisms {
        Mechanisms {
            rpj: self.use_rpj,
            vpp: self.use_vpp,
            pfa: self.lambda_roi > 0.0 || self.lambda_kl > 0.0,
            gtd: self.lambda_rot > 0.0 || self.use_gtd_residual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, v) in [
            ("lambda_rot", self.lambda_rot),
            ("lambda_roi", self.lambda_roi),
            ("lambda_kl", self.lambda_kl),
            ("rpj_range", self.rpj_range),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.pseudo_score_threshold) {
            return bad(format!("pseudo_score_threshold {} outside [0, 1]", self.pseudo_score_threshold));
        }
        let r = &self.detection_range;
        if !(r.x[0] < r.x[1] && r.y[0] < r.y[1] && r.z[0] < r.z[1]) {
            return bad("detection_range bounds must be increasing".into());
        }
        if self.voxel_size.iter().any(|v| !(*v > 0.0)) {
            return bad("voxel_size entries must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.ros_range[0] > 0.0 && self.ros_range[0] <= self.ros_range[1]) {
            return bad("ros_range must satisfy 0 < low <= high".into());
        }
        if !(self.vehicle_height > 0.0) {
            return bad("vehicle_height must be positive".into());
        }
        if self.fusion.bandwidth.iter().any(|b| !(*b > 0.0)) {
            return bad("fusion bandwidths must be positive".into());
        }
        if self.fusion.checkpoints == 0 || self.fusion.grid_points < 2 {
            return bad("fusion needs at least one checkpoint and two grid points".into());
        }
        if self.model.hidden == 0 || self.model.feature == 0 || self.model.descriptor == 0 || self.model.head_hidden == 0 {
            return bad("model dimensions must be positive".into());
        }
        Ok(())
    }
}

fn pick(v: f64, default: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        default
    }
}
