//! File formats: binary frames, JSON labels and configs, run manifests.

pub mod dataset;
pub mod frame;
pub mod labels;
pub mod manifest;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use dataset::{read_dataset, write_dataset, FrameRecord};
pub use frame::{read_frame, write_frame};
pub use labels::{read_labels, write_labels, LabelRecord};
pub use manifest::{FileDigest, RunManifest};

/// Reads a JSON document; unknown keys are rejected by the target type.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
