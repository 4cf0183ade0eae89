//! The compound detector.
//!
//! Each specialist proposes regions for its detection query, classifies every
//! padded crop together with the original image, and ORs the crop verdicts.
//! The image verdict is the OR over specialists. [`compile_program`] builds
//! the per-specialist instructions and demonstration plans; the result is a
//! [`CompiledProgram`] that can be saved and reloaded for [`predict`].

mod compile;
mod geometry;
mod predict;
mod program;
mod prompt;
mod specialist;

use std::path::PathBuf;

use crate::data::DataError;
use crate::eval::MetricError;
use crate::icl::SelectError;
use crate::optimize::OptimizeError;
use crate::providers::{Bbox, ProviderError};

pub use compile::{compile_program, Budgets, CompileConfig, CompileOutcome, SpecialistReport, SpecialistScorer};
pub use geometry::crop_with_padding;
pub use predict::{index_records, predict, predict_one, with_pool, PredictOptions, PredictionTrace};
pub use program::{
    load_program, load_program_checked, save_program, CompiledProgram, IclConfig, ProgramSpecialist, PROGRAM_VERSION,
};
pub use prompt::{
    render_multi_prompt, render_prompt, resolve_instruction, PromptError, MULTI_SUBLABEL_TEMPLATE,
    SINGLE_SUBLABEL_TEMPLATE,
};
pub use specialist::{
    aggregate, default_crop_target, run_specialist, CropTrace, DemoCache, IclPlan, Providers, SpecialistFailure,
    SpecialistRun, SpecialistSpec, SpecialistTrace, DEFAULT_MAX_REGIONS, DEFAULT_SCORE_THRESHOLD,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("degenerate box {0:?}")]
    DegenerateBox(Bbox),
    #[error("invalid specialist spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("specialist {sublabel_id}: {source}")]
    Provider {
        sublabel_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("embeddings are required for {0} but none were loaded")]
    MissingEmbeddings(String),
    #[error("image {0:?} is not in the manifest")]
    UnknownImage(String),
    #[error("nothing to aggregate: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("program version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: &'static str },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("specialist {sublabel_id} references image {image_id:?}, which is not in the manifest")]
    DanglingReference { sublabel_id: String, image_id: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}
