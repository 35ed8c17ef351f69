//! Per-frame box labels as JSON: `[{center, dims, heading, class, score?}]`.
//! A missing score marks ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Box7, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub center: [f64; 3],
    pub dims: [f64; 3],
    pub heading: f64,
    pub class: ObjectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl From<&Box7> for LabelRecord {
    fn from(b: &Box7) -> Self {
        Self {
            center: [b.cx, b.cy, b.cz],
            dims: [b.l, b.w, b.h],
            heading: b.heading,
            class: b.class,
            score: b.score,
        }
    }
}

impl LabelRecord {
    pub fn to_box(&self) -> Box7 {
        let mut b = Box7::new(self.center, self.dims, self.heading, self.class);
        // keep the stored heading bit-exact
        b.heading = self.heading;
        b.score = self.score;
        b
    }
}

pub fn encode_labels(boxes: &[Box7]) -> String {
    let records: Vec<LabelRecord> = boxes.iter().map(LabelRecord::from).collect();
    let mut s = serde_json::to_string_pretty(&records).expect("labels serialize");
    s.push('\n');
    s
}

pub fn decode_labels(text: &str, path: &Path) -> Result<Vec<Box7>> {
    let records: Vec<LabelRecord> = serde_json::from_str(text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    records
        .iter()
        .map(|r| {
            let b = r.to_box();
            let finite = [b.cx, b.cy, b.cz, b.heading].iter().all(|v| v.is_finite());
            if !finite || !b.is_valid() {
                return Err(Error::format(path, format!("invalid box {r:?}")));
            }
            Ok(b)
        })
        .collect()
}

pub fn write_labels(path: &Path, boxes: &[Box7]) -> Result<()> {
    std::fs::write(path, encode_labels(boxes)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<Box7>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_score_presence() {
        let gt = Box7::new([1.0, 2.0, 0.85], [4.5, 1.9, 1.7], 0.3, ObjectClass::Vehicle);
        let det = Box7::new([0.0, -1.0, 0.9], [0.8, 0.8, 1.75], -2.0, ObjectClass::Pedestrian).with_score(0.75);
        let text = encode_labels(&[gt, det]);
        assert!(text.contains("\"pedestrian\"") && text.matches("score").count() == 1);
        let back = decode_labels(&text, Path::new("l.json")).unwrap();
        assert_eq!(back, vec![gt, det]);
        assert_eq!(encode_labels(&back), text);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_boxes() {
        let p = Path::new("l.json");
        let extra = r#"[{"center":[0,0,0],"dims":[1,1,1],"heading":0,"class":"vehicle","colour":1}]"#;
        assert!(decode_labels(extra, p).is_err());
        let flat = r#"[{"center":[0,0,0],"dims":[1,0,1],"heading":0,"class":"vehicle"}]"#;
        assert!(decode_labels(flat, p).is_err());
        assert!(decode_labels("[]", p).unwrap().is_empty());
    }
}
