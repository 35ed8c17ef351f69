//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic "ADPTCKPT" | u32 version | u32 metadata length | metadata (UTF-8 JSON)
//! u32 tensor count | per tensor: u32 name length, name, u32 ndim, u64 dims..., f64 data...
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::model::AdaptModel;
use super::params::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ADPTCKPT";
pub const VERSION: u32 = 1;

pub fn encode(model: &AdaptModel, metadata: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    let entries = model.params.entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for d in &e.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &model.params.data[e.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap_or_default()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap_or_default()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap_or_default()))
    }
}

/// Parses a checkpoint; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(AdaptModel, String)> {
    let fail = |r: String| Error::format(path, r);
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8).map_err(fail)? != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = c.u32().map_err(fail)?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let meta_len = c.u32().map_err(fail)? as usize;
    let metadata = std::str::from_utf8(c.take(meta_len).map_err(fail)?)
        .map_err(|e| fail(e.to_string()))?
        .to_string();
    let count = c.u32().map_err(fail)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let n = c.u32().map_err(fail)? as usize;
        let name = std::str::from_utf8(c.take(n).map_err(fail)?)
            .map_err(|e| fail(e.to_string()))?
            .to_string();
        let ndim = c.u32().map_err(fail)? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(c.u64().map_err(fail)? as usize);
        }
        let offset = store.push(&name, &shape);
        let len: usize = shape.iter().product();
        if len.saturating_mul(8) > bytes.len() {
            return Err(fail(format!("tensor {name} larger than file")));
        }
        for i in 0..len {
            let v = c.f64().map_err(fail)?;
            if !v.is_finite() {
                return Err(fail(format!("non-finite value in {name}")));
            }
            store.data[offset + i] = v;
        }
    }
    if c.pos != bytes.len() {
        return Err(fail("trailing bytes".into()));
    }
    let dims = AdaptModel::infer_dims(&store).map_err(|e| fail(e.to_string()))?;
    let model = AdaptModel::from_params(dims, store).map_err(|e| fail(e.to_string()))?;
    Ok((model, metadata))
}

pub fn save(model: &AdaptModel, metadata: &str, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(model, metadata)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(AdaptModel, String)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode(&buf, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnalign::model::ModelDims;

    #[test]
    fn round_trip_is_lossless() {
        let m = AdaptModel::new(ModelDims::default(), 11);
        let bytes = encode(&m, "{\"seed\":11}");
        let (back, meta) = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta, "{\"seed\":11}");
        assert_eq!(encode(&back, &meta), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = AdaptModel::new(ModelDims::default(), 1);
        let bytes = encode(&m, "");
        let p = Path::new("mem");
        assert!(decode(&bytes[..bytes.len() - 3], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra, p).is_err());
    }
}
