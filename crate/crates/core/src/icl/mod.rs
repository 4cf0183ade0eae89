//! Demonstration selection for in-context learning.
//!
//! Four selectors are provided: uniform random sampling
//! ([`select_labeled_few_shot`]), random search over sampled sets scored on a
//! validation split ([`select_lfs_random_search`]), class-balanced nearest
//! neighbour retrieval in embedding space ([`select_dynamic_few_shot`]), and
//! counterfactual pairing of each positive with its most similar negative
//! ([`pair_counterfactual`]).

mod counterfactual;
mod random;
mod retrieval;

use serde::{Deserialize, Serialize};

use crate::data::DataError;

pub use counterfactual::{pair_counterfactual, PairSource};
pub use random::{select_labeled_few_shot, select_lfs_random_search, select_static};
pub use retrieval::{rank_by_similarity, select_dynamic_few_shot};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("need {requested} demonstrations but the corpus has {available}")]
    Insufficient { requested: usize, available: usize },
    #[error("need {needed} examples with label {label} but the corpus has {available}")]
    ClassExhausted {
        label: u8,
        needed: usize,
        available: usize,
    },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("evaluating candidate set {index} failed: {source}")]
    Evaluator {
        index: usize,
        #[source]
        source: BoxError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One (image, label) pair shown to the VLM.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub image_id: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<u32>,
}

impl Demonstration {
    pub fn new(image_id: impl Into<String>, label: u8) -> Self {
        Self {
            image_id: image_id.into(),
            label,
            pair_id: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// No demonstrations.
    ZeroShot,
    LabeledFewShot,
    LfsRandomSearch,
    DynamicFewShot,
}

/// Which embedding is used as the retrieval query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieveOn {
    #[default]
    Image,
    /// Requires embeddings keyed by [`crop_embedding_key`].
    Crop,
}

/// Whether demonstration images are sent whole or cropped like the query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoImages {
    #[default]
    Full,
    Crop,
}

/// Store key for the embedding of one crop of an image.
pub fn crop_embedding_key(image_id: &str, region: &crate::providers::PixelBox) -> String {
    format!("{image_id}#{},{},{},{}", region.x0, region.y0, region.x1, region.y1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub strategy: SelectionStrategy,
    pub m: usize,
    pub counterfactual: bool,
    pub n_sets: usize,
    pub seed: u64,
    pub retrieve_on: RetrieveOn,
    pub demo_images: DemoImages,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            strategy: SelectionStrategy::DynamicFewShot,
            m: 10,
            counterfactual: true,
            n_sets: 8,
            seed: 0,
            retrieve_on: RetrieveOn::Image,
            demo_images: DemoImages::Full,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.strategy == SelectionStrategy::ZeroShot {
            return Ok(());
        }
        if self.m < 2 {
            return Err(SelectError::InvalidConfig(format!("m = {} must be at least 2", self.m)));
        }
        if (self.counterfactual || self.strategy == SelectionStrategy::DynamicFewShot) && !self.m.is_multiple_of(2) {
            return Err(SelectError::InvalidConfig(format!(
                "m = {} must be even for balanced or paired selection",
                self.m
            )));
        }
        if self.n_sets == 0 {
            return Err(SelectError::InvalidConfig("n_sets must be at least 1".into()));
        }
        Ok(())
    }
}
