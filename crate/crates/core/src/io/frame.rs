//! Binary point-cloud frames.
//!
//! Little-endian layout: magic `PI3F`, `u32` version, `u64` point count,
//! `count × 4 × f32` (x, y, z, intensity), seven `f64` pose values (roll,
//! pitch, yaw, tx, ty, tz, timestamp) and a `u8` platform tag. Labels live in
//! a separate JSON file, so a decoded frame has no boxes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Frame, Platform, Point, Pose};

pub const MAGIC: &[u8; 4] = b"PI3F";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8;
const TRAILER_LEN: usize = 7 * 8 + 1;

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.points.len() * 16 + TRAILER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.points.len() as u64).to_le_bytes());
    for p in &frame.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let pose = &frame.pose;
    for v in [pose.roll, pose.pitch, pose.yaw, pose.t[0], pose.t[1], pose.t[2], frame.timestamp] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(frame.platform.tag());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let chunk = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        chunk.try_into().ok()
    }
}

pub fn decode_frame(bytes: &[u8], path: &Path) -> Result<Frame> {
    let bad = |reason: &str| Error::format(path, reason);
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>().as_ref() != Some(MAGIC) {
        return Err(bad("missing PI3F magic"));
    }
    let version = u32::from_le_bytes(r.take().ok_or_else(|| bad("truncated header"))?);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(r.take().ok_or_else(|| bad("truncated header"))?);
    let expected = (count as u128) * 16 + (HEADER_LEN + TRAILER_LEN) as u128;
    if expected != bytes.len() as u128 {
        return Err(bad(&format!("{} bytes for {count} points", bytes.len())));
    }
    let mut points = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut v = [0.0f64; 4];
        for x in &mut v {
            *x = f32::from_le_bytes(r.take().ok_or_else(|| bad("truncated points"))?) as f64;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite point coordinate"));
        }
        points.push(Point::new(v[0], v[1], v[2], v[3]));
    }
    let mut pose = [0.0f64; 7];
    for x in &mut pose {
        *x = f64::from_le_bytes(r.take().ok_or_else(|| bad("truncated pose"))?);
    }
    if pose.iter().any(|x| !x.is_finite()) {
        return Err(bad("non-finite pose"));
    }
    let tag = r.take::<1>().ok_or_else(|| bad("missing platform tag"))?[0];
    let platform = Platform::from_tag(tag).ok_or_else(|| bad(&format!("unknown platform tag {tag}")))?;
    Ok(Frame {
        platform,
        timestamp: pose[6],
        points,
        boxes: Vec::new(),
        pose: Pose::new(pose[0], pose[1], pose[2], [pose[3], pose[4], pose[5]]),
    })
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Frame {
        Frame {
            platform: Platform::Drone,
            timestamp: 0.3,
            points: vec![Point::new(1.5, -2.25, 0.125, 0.5), Point::new(0.1, 0.2, 0.3, 0.9)],
            boxes: vec![],
            pose: Pose::new(0.01, -0.02, 1.2, [3.0, 4.0, 5.5]),
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let f = sample();
        let bytes = encode_frame(&f);
        assert_eq!(&bytes[..4], b"PI3F");
        assert_eq!(bytes.len(), 16 + 2 * 16 + 57);
        let back = decode_frame(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.pose, f.pose);
        assert_eq!(back.timestamp, f.timestamp);
        assert_eq!(back.points[0], f.points[0]);
        assert_eq!(encode_frame(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_frame(&sample());
        let p = Path::new("x");
        assert!(decode_frame(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_frame(&bad, p).is_err());
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() = 9;
        assert!(decode_frame(&bad, p).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_frame(&long, p).is_err());
    }
}
