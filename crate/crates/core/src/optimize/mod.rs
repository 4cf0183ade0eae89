//! Black-box instruction search.
//!
//! Candidate instructions come from a generator LLM prompted with the
//! COPRO optimizer text and the seed instruction. Full-spectrum pools add a
//! sampled confidence-threshold hint to each round-0 prompt; suffix-only
//! pools skip the generator and append the hint to the seed directly.
//! Candidates are scored on a validation split and the best are fed back to
//! the generator for further rounds.

mod candidates;
mod copro;
mod hints;

use crate::icl::BoxError;
use crate::pipeline::PromptError;
use crate::providers::ProviderError;

pub use candidates::{
    build_meta_prompt, generate_candidates, generate_candidates_suffix_only, generate_rewrites,
    top_scored, CandidateInstruction, CandidateOrigin, GenerationParams, SeedSignature,
};
pub use copro::{
    optimize_instruction, write_history, CandidatePool, CandidateScorer, HistoryRecord, Metric,
    OptimizationOutcome, OptimizerConfig,
};
pub use hints::{sample_threshold_hints, HintCategory, HintSample};

pub const COPRO_INSTRUCTION: &str = "You are an instruction optimizer for large language models. I will give you a ``signature`` of fields (inputs and outputs) in English. Your task is to propose an instruction that will lead a good language model to perform the task well. Don't be afraid to be creative.";

/// Prefix of the meta-prompt line carrying the seed instruction.
pub const SIGNATURE_MARKER: &str = "Signature: ";

/// Introduces scored previous instructions, one `[n] score S: text` per line.
pub const HISTORY_HEADER: &str = "Previous instructions with their validation scores, best first:";

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("generator call for candidate {index} failed: {source}")]
    Generator {
        index: usize,
        #[source]
        source: ProviderError,
    },
    #[error("generator returned an empty instruction for candidate {index}")]
    EmptyCandidate { index: usize },
    #[error("scoring candidate {index} failed: {source}")]
    Scoring {
        index: usize,
        #[source]
        source: BoxError,
    },
    #[error("optimization aborted in round {round} after {} scored candidates: {source}", history.len())]
    Aborted {
        round: usize,
        history: Vec<CandidateInstruction>,
        #[source]
        source: Box<OptimizeError>,
    },
}
