//! Dataset manifests, the sublabel taxonomy, embedding stores and the
//! per-sublabel training sets derived from them.

mod embeddings;
mod filter;
mod manifest;
mod sublabel;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use embeddings::{cosine, load_embeddings, parse_embeddings, EmbeddingStore};
pub use filter::{filter_contains_human, HUMAN_FILTER_LABEL, HUMAN_FILTER_PROMPT};
pub use manifest::{load_manifest, parse_manifest, save_manifest, write_manifest};
pub use sublabel::{cap_dataset, derive_sublabel_dataset, split_train_val};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("unknown sublabel {sublabel:?}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownSublabel { sublabel: String, line: Option<usize> },
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("line {line}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: embedding for {id:?} has zero norm")]
    ZeroNorm { line: usize, id: String },
    #[error("no embedding for image {0:?}")]
    MissingEmbedding(String),
    #[error("requested {requested} items but only {available} are available")]
    InsufficientItems { requested: usize, available: usize },
}

/// One error type in the labeling taxonomy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sublabel {
    pub id: String,
    pub label_name: String,
    pub description: String,
}

/// Ordered list of sublabels. The order is the canonical specialist order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Sublabel>", into = "Vec<Sublabel>")]
pub struct SublabelTaxonomy {
    sublabels: Vec<Sublabel>,
}

impl SublabelTaxonomy {
    pub fn new(sublabels: Vec<Sublabel>) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        for s in &sublabels {
            if s.id.is_empty() {
                return Err(DataError::InvalidTaxonomy("empty sublabel id".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::InvalidTaxonomy(format!(
                    "duplicate sublabel id {:?}",
                    s.id
                )));
            }
            if !is_machine_safe(&s.label_name) {
                return Err(DataError::InvalidTaxonomy(format!(
                    "label_name {:?} must match [a-z0-9_]+",
                    s.label_name
                )));
            }
        }
        Ok(Self { sublabels })
    }

    pub fn sublabels(&self) -> &[Sublabel] {
        &self.sublabels
    }

    pub fn get(&self, id: &str) -> Option<&Sublabel> {
        self.sublabels.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.sublabels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sublabels.is_empty()
    }
}

impl TryFrom<Vec<Sublabel>> for SublabelTaxonomy {
    type Error = DataError;

    fn try_from(value: Vec<Sublabel>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SublabelTaxonomy> for Vec<Sublabel> {
    fn from(value: SublabelTaxonomy) -> Self {
        value.sublabels
    }
}

pub(crate) fn is_machine_safe(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which records a derivation draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitSelector {
    Train,
    Test,
    All,
}

impl SplitSelector {
    pub fn accepts(self, split: Split) -> bool {
        match self {
            SplitSelector::All => true,
            SplitSelector::Train => split == Split::Train,
            SplitSelector::Test => split == Split::Test,
        }
    }
}

impl From<Split> for SplitSelector {
    fn from(value: Split) -> Self {
        match value {
            Split::Train => SplitSelector::Train,
            Split::Test => SplitSelector::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub uri: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub sublabels: BTreeMap<String, u8>,
}

impl ImageRecord {
    /// Image-level label: an image is an artifact if any sublabel is set.
    pub fn label(&self) -> u8 {
        u8::from(self.sublabels.values().any(|&v| v == 1))
    }

    pub fn sublabel(&self, id: &str) -> u8 {
        self.sublabels.get(id).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub taxonomy: SublabelTaxonomy,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn records_in(&self, split: SplitSelector) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| split.accepts(r.split))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub image_id: String,
    pub label: u8,
}

impl LabeledItem {
    pub fn new(image_id: impl Into<String>, label: u8) -> Self {
        Self {
            image_id: image_id.into(),
            label,
        }
    }
}

/// Binary training data for one specialist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SublabelDataset {
    pub sublabel_id: String,
    pub items: Vec<LabeledItem>,
}

impl SublabelDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = &LabeledItem> {
        self.items.iter().filter(|i| i.label == 1)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &LabeledItem> {
        self.items.iter().filter(|i| i.label == 0)
    }

    pub fn count_positive(&self) -> usize {
        self.positives().count()
    }
}
