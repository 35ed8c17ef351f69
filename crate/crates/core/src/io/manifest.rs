//! Run manifests: what was run, with which configuration and seed, on which
//! inputs (by content digest), producing which outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Digests of every regular file under `root`, sorted by path.
pub fn digest_tree(root: &Path) -> Result<Vec<FileDigest>> {
    if root.is_file() {
        return Ok(vec![digest_file(root)?]);
    }
    let mut files: Vec<PathBuf> = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    files.iter().map(|p| digest_file(p)).collect()
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            tool: TOOL.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_inputs(&mut self, root: &Path) -> Result<()> {
        self.inputs.extend(digest_tree(root)?);
        Ok(())
    }

    /// Output paths are recorded relative to `root` so that identical runs into
    /// different directories produce identical manifests.
    pub fn add_outputs(&mut self, root: &Path, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let mut d = digest_file(p)?;
            if let Ok(rel) = p.strip_prefix(root) {
                d.path = rel.display().to_string();
            }
            self.outputs.push(d);
        }
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    /// Recomputes every recorded digest, resolving outputs under `out_root`;
    /// returns the paths that differ.
    pub fn stale_entries(&self, out_root: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        let inputs = self.inputs.iter().map(|d| (PathBuf::from(&d.path), d));
        let outputs = self.outputs.iter().map(|d| (out_root.join(&d.path), d));
        for (p, d) in inputs.chain(outputs) {
            if digest_file(&p)?.sha256 != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        Ok(stale)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, "one").unwrap();
        let mut m = RunManifest::new("test", 7, &serde_json::json!({"k": 1}));
        m.add_inputs(dir.path()).unwrap();
        let mp = dir.path().join("m.json");
        m.write(&mp).unwrap();
        assert_eq!(RunManifest::read(&mp).unwrap(), m);
        assert!(m.stale_entries(dir.path()).unwrap().is_empty());
        std::fs::write(&f, "two").unwrap();
        assert_eq!(m.stale_entries(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn outputs_are_relative_to_root() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sub").join("b.txt");
        std::fs::create_dir_all(f.parent().unwrap()).unwrap();
        std::fs::write(&f, "x").unwrap();
        let mut m = RunManifest::new("test", 0, &0);
        m.add_outputs(dir.path(), &[f]).unwrap();
        assert_eq!(m.outputs[0].path, Path::new("sub").join("b.txt").display().to_string());
        assert!(m.stale_entries(dir.path()).unwrap().is_empty());
    }
}
