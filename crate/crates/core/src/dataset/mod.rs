//! Instruction/target pairs, the `VPK1` shard format, category-balanced
//! batching and root-level train/bench splitting.

mod sampler;
mod shard;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{Canvas, MarkerSpec, Rect, RenderError};

pub use sampler::{Batch, BalancedSampler};
pub use shard::{decode_shard, encode_shard, read_shard, write_shard, ShardReader, SHARD_MAGIC};
pub use split::{split_by_root, split_with_bench_roots, SplitManifest, DEFAULT_TAU_SPLIT};
pub use synth::{color_name, synthetic_dataset, toy_color_dataset, ToyColor, TOY_PALETTE};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("shard format error at byte {offset} (record {record}): {reason}")]
    Format { offset: u64, record: usize, reason: String },
    #[error("nothing to write: record list is empty")]
    Empty,
    #[error("record `{id}`: input {input:?} and target {target:?} differ in size")]
    SizeMismatch { id: String, input: (u32, u32), target: (u32, u32) },
    #[error("invalid sampler setup: {0}")]
    Sampler(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Task family of a pair. Declaration order is the category index used by
/// the balanced sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    C2I,
    T2I,
    TIE,
    TBE,
    VME,
    DE,
    FU,
    TU,
}

impl Category {
    pub const ALL: [Category; 8] = [Self::C2I, Self::T2I, Self::TIE, Self::TBE, Self::VME, Self::DE, Self::FU, Self::TU];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::C2I => "C2I",
            Self::T2I => "T2I",
            Self::TIE => "TIE",
            Self::TBE => "TBE",
            Self::VME => "VME",
            Self::DE => "DE",
            Self::FU => "FU",
            Self::TU => "TU",
        }
    }

    /// Editing tasks condition on a source image; generation tasks do not.
    pub fn is_editing(self) -> bool {
        !matches!(self, Self::C2I | Self::T2I)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// Everything about a pair except its pixels; stored as JSON in shards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub id: String,
    pub category: Category,
    pub root_id: String,
    /// Ground-truth text rendered onto the input canvas, if any.
    #[serde(default)]
    pub instruction: String,
    #[serde(default)]
    pub markers: Vec<MarkerSpec>,
    #[serde(default)]
    pub boxes: Vec<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub meta: PairMeta,
    pub input: Canvas,
    pub target: Canvas,
}

impl PairRecord {
    pub fn new(meta: PairMeta, input: Canvas, target: Canvas) -> Result<Self, DatasetError> {
        let (a, b) = ((input.width(), input.height()), (target.width(), target.height()));
        if a != b {
            return Err(DatasetError::SizeMismatch { id: meta.id, input: a, target: b });
        }
        Ok(Self { meta, input, target })
    }

    pub fn category(&self) -> Category {
        self.meta.category
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub roots: usize,
    pub per_category: BTreeMap<Category, usize>,
    pub sizes: BTreeMap<String, usize>,
}

pub fn dataset_stats(records: &[PairRecord]) -> DatasetStats {
    let mut per_category = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    let mut roots = std::collections::BTreeSet::new();
    for r in records {
        *per_category.entry(r.category()).or_insert(0) += 1;
        *sizes.entry(format!("{}x{}", r.input.width(), r.input.height())).or_insert(0) += 1;
        roots.insert(r.meta.root_id.as_str());
    }
    DatasetStats { records: records.len(), roots: roots.len(), per_category, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Rgba;

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!("XYZ".parse::<Category>().is_err());
        assert_eq!(Category::ALL.iter().filter(|c| c.is_editing()).count(), 6);
    }

    #[test]
    fn mismatched_canvases_rejected() {
        let meta = PairMeta {
            id: "a".into(),
            category: Category::C2I,
            root_id: "r".into(),
            instruction: String::new(),
            markers: vec![],
            boxes: vec![],
        };
        let a = Canvas::new(4, 4, Rgba::WHITE).unwrap();
        let b = Canvas::new(4, 5, Rgba::WHITE).unwrap();
        assert!(matches!(PairRecord::new(meta, a, b), Err(DatasetError::SizeMismatch { .. })));
    }
}
