//! Two-stage adaptation (pre-adaptation on the source platform, then
//! knowledge adaptation with pseudo-labeled target frames) and the
//! auto-labeling helpers around it.

pub mod config;
pub mod detector;
pub mod eval;
pub mod pipeline;
pub mod fusion;
pub mod pseudo;
pub mod tracking;
pub mod train;

pub use detector::estimate_jitter;
pub use config::{AdaptConfig, DetectionRange, FusionConfig, Mechanisms, ProposalConfig};
pub use eval::{evaluate_boxes, evaluate_model, ApEntry, EvalReport};
pub use fusion::{kbf_fuse, KbfParams};
pub use pseudo::{generate_pseudo_labels, PseudoLabelSet};
pub use tracking::{temporal_refine, Track};
pub use train::{knowledge_adapt, pre_adapt, pre_adapt_with_snapshots, LossTrace, Stage};
pub use pipeline::{adapt_from, run_adaptation, AdaptOutcome};
