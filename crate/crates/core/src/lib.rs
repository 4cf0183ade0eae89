//! Scaffolding for frozen vision-language models used as binary artifact
//! detectors.
//!
//! An image is routed to one *specialist* per error sublabel. Each specialist
//! crops regions of interest, asks a VLM for a binary verdict per crop, and the
//! verdicts are OR-aggregated, first across crops and then across specialists.
//! Specialists are compiled independently: demonstrations are selected for
//! in-context learning, then the instruction text is searched against a
//! validation split using positive-class F1.
//!
//! The [`providers`] module abstracts the external model services. A
//! deterministic simulated oracle lets the whole system run offline.

pub mod data;
pub mod eval;
pub mod icl;
pub mod optimize;
pub mod pipeline;
pub mod providers;
pub mod seed;
pub mod synthetic;

pub use data::{
    DatasetManifest, EmbeddingStore, ImageRecord, LabeledItem, Split, SplitSelector, Sublabel,
    SublabelDataset, SublabelTaxonomy,
};
pub use eval::{ConfusionCounts, MetricReport, SuiteReport};
pub use icl::{Demonstration, SelectionConfig, SelectionStrategy};
pub use optimize::{CandidateInstruction, HintCategory, HintSample, OptimizerConfig, SeedSignature};
pub use pipeline::{CompiledProgram, PredictionTrace, SpecialistSpec};
