//! Directory layout: one `<id>.pi3f` per frame with an optional `<id>.json`
//! label file beside it. Ids sort in time order; the part before the last
//! `_` names the sequence.

use std::path::{Path, PathBuf};

use super::frame::{read_frame, write_frame};
use super::labels::{read_labels, write_labels};
use crate::error::{Error, Result};
use crate::geom::{Box7, Frame};

pub const FRAME_EXT: &str = "pi3f";
pub const LABEL_EXT: &str = "json";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub id: String,
    pub frame: Frame,
}

/// Frame id for frame `index` of sequence `sequence`.
pub fn frame_id(sequence: usize, index: usize) -> String {
    format!("{sequence:03}_{index:04}")
}

/// Sequence part of a frame id (the whole id when it has no `_`).
pub fn sequence_key(id: &str) -> &str {
    id.rsplit_once('_').map_or(id, |(s, _)| s)
}

/// Sorted ids of files with extension `ext` directly inside `dir`.
pub fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if !stem.starts_with('.') && stem != "manifest" {
                    ids.push(stem.to_string());
                }
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn frame_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{FRAME_EXT}"))
}

pub fn label_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{LABEL_EXT}"))
}

/// Writes frames and their boxes.
pub fn write_dataset(dir: &Path, records: &[FrameRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for r in records {
        let fp = frame_path(dir, &r.id);
        write_frame(&fp, &r.frame)?;
        let lp = label_path(dir, &r.id);
        write_labels(&lp, &r.frame.boxes)?;
        written.push(fp);
        written.push(lp);
    }
    Ok(written)
}

/// Reads every frame of `dir`, attaching labels where a label file exists.
pub fn read_dataset(dir: &Path) -> Result<Vec<FrameRecord>> {
    let ids = list_ids(dir, FRAME_EXT)?;
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!("no .{FRAME_EXT} files in {}", dir.display())));
    }
    ids.into_iter()
        .map(|id| {
            let mut frame = read_frame(&frame_path(dir, &id))?;
            let lp = label_path(dir, &id);
            if lp.is_file() {
                frame.boxes = read_labels(&lp)?;
            }
            Ok(FrameRecord { id, frame })
        })
        .collect()
}

/// Reads all label files of `dir` in id order.
pub fn read_label_dir(dir: &Path) -> Result<Vec<(String, Vec<Box7>)>> {
    list_ids(dir, LABEL_EXT)?
        .into_iter()
        .map(|id| {
            let boxes = read_labels(&label_path(dir, &id))?;
            Ok((id, boxes))
        })
        .collect()
}

/// Splits records into consecutive runs sharing a sequence key.
pub fn group_sequences(records: &[FrameRecord]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || sequence_key(&records[i].id) != sequence_key(&records[start].id) {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}
