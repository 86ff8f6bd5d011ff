//! Binary feature container.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! b"MTFT" | version u32 | count u32 | frames u32 | bins u32
//! count x { id_len u32 | id utf-8 | 7 x f32 label | frames*bins x f32 (time-major) }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::LogMel;

pub const MAGIC: &[u8; 4] = b"MTFT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub chunk_id: String,
    pub labels: LabelVector,
    pub feature: LogMel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub frames: usize,
    pub bins: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(frames: usize, bins: usize) -> Self {
        FeatureSet { frames, bins, records: Vec::new() }
    }

    pub fn push(&mut self, record: FeatureRecord) -> Result<()> {
        if record.feature.shape() != (self.frames, self.bins) {
            return Err(Error::Shape(format!(
                "record `{}` is {:?}, container holds {}x{}",
                record.chunk_id,
                record.feature.shape(),
                self.frames,
                self.bins
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, chunk_id: &str) -> Option<&FeatureRecord> {
        self.records.iter().find(|r| r.chunk_id == chunk_id)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.records.len() as u32, self.frames as u32, self.bins as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * (NUM_CLASSES + self.frames * self.bins));
        for r in &self.records {
            w.write_all(&(r.chunk_id.len() as u32).to_le_bytes())?;
            w.write_all(r.chunk_id.as_bytes())?;
            buf.clear();
            for &v in r.labels.0.iter().chain(&r.feature.data) {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        Self::read_from(&mut r)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 0, msg: format!("feature container: {msg}") };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = read_u32(r).map_err(|e| bad(e.to_string()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = read_u32(r).map_err(|e| bad(e.to_string()))? as usize;
        let frames = read_u32(r).map_err(|e| bad(e.to_string()))? as usize;
        let bins = read_u32(r).map_err(|e| bad(e.to_string()))? as usize;

        let mut set = FeatureSet::new(frames, bins);
        let mut raw = vec![0u8; 4 * (NUM_CLASSES + frames * bins)];
        for i in 0..count {
            let id_len = read_u32(r).map_err(|e| bad(format!("record {i}: {e}")))? as usize;
            let mut id = vec![0u8; id_len];
            r.read_exact(&mut id).map_err(|e| bad(format!("record {i}: {e}")))?;
            let chunk_id = String::from_utf8(id).map_err(|e| bad(format!("record {i}: {e}")))?;
            r.read_exact(&mut raw).map_err(|e| bad(format!("record {i}: {e}")))?;
            let values: Vec<f64> =
                raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
            let mut labels = [0.0; NUM_CLASSES];
            labels.copy_from_slice(&values[..NUM_CLASSES]);
            let feature = LogMel::new(frames, bins, values[NUM_CLASSES..].to_vec())?;
            set.records.push(FeatureRecord { chunk_id, labels: LabelVector(labels), feature });
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, values: Vec<f64>, frames: usize, bins: usize) -> FeatureRecord {
        FeatureRecord {
            chunk_id: id.to_string(),
            labels: LabelVector([1.0, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0]),
            feature: LogMel::new(frames, bins, values).unwrap(),
        }
    }

    #[test]
    fn header_layout() {
        let mut set = FeatureSet::new(2, 3);
        set.push(record("ab", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3)).unwrap();
        let bytes = set.to_bytes();
        assert_eq!(&bytes[..4], b"MTFT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..26], b"ab");
        assert_eq!(bytes.len(), 26 + 4 * (7 + 6));
        // first feature value follows the 7 labels
        assert_eq!(&bytes[26 + 28..26 + 32], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_wrong_shape_and_magic() {
        let mut set = FeatureSet::new(2, 3);
        assert!(set.push(record("x", vec![0.0; 4], 2, 2)).is_err());
        assert!(FeatureSet::from_bytes(b"XXXX\x01\0\0\0").is_err());
        assert!(FeatureSet::from_bytes(b"MTFT\x01\0\0\0\x05\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e3f32..1e3, 12), id in "[a-z0-9_]{1,12}") {
            let mut set = FeatureSet::new(4, 3);
            set.push(record(&id, values.iter().map(|&v| v as f64).collect(), 4, 3)).unwrap();
            let back = FeatureSet::from_bytes(&set.to_bytes()).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
