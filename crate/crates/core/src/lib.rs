pub mod adapt;
pub mod cli;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nnalign;
pub mod parallel;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
