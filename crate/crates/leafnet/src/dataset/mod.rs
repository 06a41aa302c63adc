//! Dataset records, manifest ingestion, stratified splitting, and the
//! synthetic leaf-image generator.

mod manifest;
mod split;
mod synth;

pub use manifest::{load_manifest, resolve_record_path, save_manifest, MANIFEST_HEADER};
pub use split::{stratified_split, SplitSpec, SplitSummary, StratifyOn};
pub use synth::{generate_synthetic, mask_from_image, mask_paths_for, render_synth_image, SynthConfig, SynthImage};

use crate::imaging::SeverityClass;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("missing header: expected \"path,kind,stress,severity,split\", got {0:?}")]
    MissingHeader(String),
    #[error("unknown label {value:?} in column {column} at row {row}")]
    UnknownLabel {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("missing severity for leaf record at row {row}")]
    MissingSeverity { row: usize },
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },
    #[error("records already carry split assignments (pass respect_existing to keep them)")]
    AlreadySplit,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

/// The five biotic-stress classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StressClass {
    Healthy,
    LeafMiner,
    Rust,
    BrownLeafSpot,
    CercosporaLeafSpot,
}

pub const STRESS_CLASSES: [StressClass; 5] = [
    StressClass::Healthy,
    StressClass::LeafMiner,
    StressClass::Rust,
    StressClass::BrownLeafSpot,
    StressClass::CercosporaLeafSpot,
];

impl StressClass {
    pub fn index(&self) -> usize {
        match self {
            StressClass::Healthy => 0,
            StressClass::LeafMiner => 1,
            StressClass::Rust => 2,
            StressClass::BrownLeafSpot => 3,
            StressClass::CercosporaLeafSpot => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        STRESS_CLASSES.get(i).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StressClass::Healthy => "healthy",
            StressClass::LeafMiner => "leaf_miner",
            StressClass::Rust => "rust",
            StressClass::BrownLeafSpot => "brown_leaf_spot",
            StressClass::CercosporaLeafSpot => "cercospora_leaf_spot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        STRESS_CLASSES.iter().copied().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Whole-leaf photographs: both tasks are labeled.
    Leaf,
    /// Cropped symptom patches: only the stress task is labeled.
    Symptom,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Leaf => "leaf",
            DatasetKind::Symptom => "symptom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leaf" => Some(DatasetKind::Leaf),
            "symptom" => Some(DatasetKind::Symptom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One manifest row: an image path with its labels. Severity is required
/// for leaf records and optional for symptom records.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub kind: DatasetKind,
    pub stress: StressClass,
    pub severity: Option<SeverityClass>,
    pub split: Option<Split>,
}
