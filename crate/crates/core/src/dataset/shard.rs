use std::fs;
use std::path::Path;

use super::{DatasetError, PairMeta, PairRecord};
use crate::render::Canvas;

pub const SHARD_MAGIC: &[u8; 4] = b"VPK1";

fn push_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Serialises records as `VPK1` followed by
/// `[u32 meta-len][meta JSON][u32 len][input PPM][u32 len][target PPM]`
/// per record, little-endian.
pub fn encode_shard(records: &[PairRecord]) -> Vec<u8> {
    let mut out = SHARD_MAGIC.to_vec();
    for r in records {
        push_block(&mut out, &serde_json::to_vec(&r.meta).expect("metadata serialises"));
        push_block(&mut out, &r.input.to_ppm());
        push_block(&mut out, &r.target.to_ppm());
    }
    out
}

pub fn write_shard(records: &[PairRecord], path: impl AsRef<Path>) -> Result<usize, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    fs::write(path, encode_shard(records))?;
    Ok(records.len())
}

/// Streaming view over an in-memory shard. Yields records in write order and
/// stops after the first error.
#[derive(Debug)]
pub struct ShardReader {
    bytes: Vec<u8>,
    pos: usize,
    record: usize,
    failed: bool,
}

impl ShardReader {
    pub fn new(bytes: Vec<u8>) -> Result<Self, DatasetError> {
        if bytes.len() < 4 || &bytes[..4] != SHARD_MAGIC {
            return Err(DatasetError::Format { offset: 0, record: 0, reason: "bad magic".into() });
        }
        Ok(Self { bytes, pos: 4, record: 0, failed: false })
    }

    fn err(&self, offset: usize, reason: impl Into<String>) -> DatasetError {
        DatasetError::Format { offset: offset as u64, record: self.record, reason: reason.into() }
    }

    fn block(&mut self, what: &str) -> Result<&[u8], DatasetError> {
        let at = self.pos;
        let Some(len) = self.bytes.get(at..at + 4) else {
            return Err(self.err(at, format!("truncated {what} length")));
        };
        let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
        let start = at + 4;
        if self.bytes.len() - start < len {
            return Err(self.err(start, format!("truncated {what}: need {len} bytes")));
        }
        self.pos = start + len;
        Ok(&self.bytes[start..start + len])
    }

    fn next_record(&mut self) -> Result<PairRecord, DatasetError> {
        let meta_at = self.pos + 4;
        let meta: PairMeta =
            serde_json::from_slice(self.block("metadata")?).map_err(|e| self.err(meta_at, format!("metadata: {e}")))?;
        let input_at = self.pos + 4;
        let input = Canvas::from_ppm(self.block("input canvas")?).map_err(|e| self.err(input_at, e.to_string()))?;
        let target_at = self.pos + 4;
        let target = Canvas::from_ppm(self.block("target canvas")?).map_err(|e| self.err(target_at, e.to_string()))?;
        PairRecord::new(meta, input, target).map_err(|e| self.err(meta_at, e.to_string()))
    }
}

impl Iterator for ShardReader {
    type Item = Result<PairRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.pos >= self.bytes.len() {
            return None;
        }
        let r = self.next_record();
        self.failed = r.is_err();
        self.record += 1;
        Some(r)
    }
}

pub fn decode_shard(bytes: Vec<u8>) -> Result<Vec<PairRecord>, DatasetError> {
    ShardReader::new(bytes)?.collect()
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<ShardReader, DatasetError> {
    ShardReader::new(fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthetic_dataset, Category};

    fn sample(n: usize) -> Vec<PairRecord> {
        synthetic_dataset(n.div_ceil(8), 16, 3).unwrap().into_iter().take(n).collect()
    }

    #[test]
    fn round_trip_ten() {
        let recs = sample(10);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.vpk");
        assert_eq!(write_shard(&recs, &p).unwrap(), 10);
        let back: Vec<_> = read_shard(&p).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, recs);
        assert_eq!(encode_shard(&back), std::fs::read(&p).unwrap());
    }

    #[test]
    fn truncation_names_the_record() {
        let recs = sample(3);
        let bytes = encode_shard(&recs);
        let one = encode_shard(&recs[..1]).len();
        let two = encode_shard(&recs[..2]).len();
        let cut = bytes[..(one + two) / 2].to_vec();
        let results: Vec<_> = ShardReader::new(cut).unwrap().collect();
        assert_eq!(results.len(), 2);
        assert!(results[0].is_ok());
        match &results[1] {
            Err(DatasetError::Format { record, offset, .. }) => {
                assert_eq!(*record, 1);
                assert!(*offset as usize >= one);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_and_bad_magic_fails() {
        assert_eq!(decode_shard(SHARD_MAGIC.to_vec()).unwrap().len(), 0);
        assert!(matches!(ShardReader::new(b"VPK2".to_vec()), Err(DatasetError::Format { offset: 0, .. })));
        assert!(matches!(write_shard(&[], "/nonexistent/x"), Err(DatasetError::Empty)));
        assert_eq!(sample(8).iter().filter(|r| r.category() == Category::TU).count(), 1);
    }
}
