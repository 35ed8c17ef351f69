//! Hand-differentiated alignment networks: a point-region encoder, detection
//! head, jitter descriptor, probabilistic RoI encoders and their losses.

pub mod checkpoint;
pub mod features;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod optim;
pub mod params;
pub mod step;

pub use features::{global_inputs, region_inputs, PointInput, RegionFrame};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use losses::{
    batch_kl_alignment, bce_with_logit, kl_gaussian, reparameterize, rotation_loss, BatchGaussian,
    GaussianParams,
};
pub use model::{AdaptModel, Descriptor, ModelDims};
pub use optim::{Optimizer, OptimizerKind};
pub use step::{detection_loss, forward_backward, FrameSample, LossBreakdown, RegionSample, RegionTarget, StepOptions};
pub use params::{Dense, ParamStore};
