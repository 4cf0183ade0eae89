use serde::{Deserialize, Serialize};

use super::{HintSample, OptimizeError, COPRO_INSTRUCTION, HISTORY_HEADER, SIGNATURE_MARKER};
use crate::data::Sublabel;
use crate::pipeline::{render_prompt, PromptError, SINGLE_SUBLABEL_TEMPLATE};
use crate::providers::{PromptPart, VlmProvider, VlmRequest};
use crate::seed;

/// The concise starting instruction of one specialist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSignature {
    pub label_name: String,
    pub description: String,
    pub instruction_template: String,
}

impl SeedSignature {
    pub fn new(
        label_name: impl Into<String>,
        description: impl Into<String>,
        instruction_template: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let sig = Self {
            label_name: label_name.into(),
            description: description.into(),
            instruction_template: instruction_template.into(),
        };
        sig.render()?;
        Ok(sig)
    }

    pub fn for_sublabel(sublabel: &Sublabel) -> Self {
        Self {
            label_name: sublabel.label_name.clone(),
            description: sublabel.description.clone(),
            instruction_template: SINGLE_SUBLABEL_TEMPLATE.to_owned(),
        }
    }

    pub fn render(&self) -> Result<String, PromptError> {
        render_prompt(&self.instruction_template, &self.label_name, &self.description)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    Seed,
    /// Written by the generator from the seed, possibly with a hint.
    Generated,
    /// Seed text with the hint suffix appended.
    SuffixOnly,
    /// Written by the generator from scored previous candidates.
    Rewrite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateInstruction {
    pub text: String,
    pub hint: Option<HintSample>,
    pub round: usize,
    pub index: usize,
    pub val_score: Option<f64>,
    pub origin: CandidateOrigin,
}

impl CandidateInstruction {
    pub fn seed(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            hint: None,
            round: 0,
            index: 0,
            val_score: None,
            origin: CandidateOrigin::Seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationParams {
    pub round: usize,
    pub keep_top: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            round: 0,
            keep_top: 3,
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// The `keep_top` best scored candidates, best first; ties go to the
/// earlier round, then the lower index.
pub fn top_scored(history: &[CandidateInstruction], keep_top: usize) -> Vec<&CandidateInstruction> {
    let mut scored: Vec<_> = history.iter().filter(|c| c.val_score.is_some()).collect();
    scored.sort_by(|a, b| {
        b.val_score
            .unwrap()
            .total_cmp(&a.val_score.unwrap())
            .then(a.round.cmp(&b.round))
            .then(a.index.cmp(&b.index))
    });
    scored.truncate(keep_top);
    scored
}

/// Generator prompt: optimizer text, the seed instruction, then either a
/// hint suffix or the scored history.
pub fn build_meta_prompt(
    seed_instruction: &str,
    hint: Option<&HintSample>,
    history: &[&CandidateInstruction],
) -> String {
    let mut prompt = format!("{COPRO_INSTRUCTION}\n\n{SIGNATURE_MARKER}{}", one_line(seed_instruction));
    if !history.is_empty() {
        prompt.push_str("\n\n");
        prompt.push_str(HISTORY_HEADER);
        for (i, c) in history.iter().enumerate() {
            let score = c.val_score.unwrap_or(0.0);
            prompt.push_str(&format!("\n[{}] score {score:.4}: {}", i + 1, one_line(&c.text)));
        }
    }
    if let Some(h) = hint {
        prompt.push_str("\n\n");
        prompt.push_str(&h.suffix_text);
    }
    prompt
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ask(
    generator: &dyn VlmProvider,
    prompt: String,
    index: usize,
    params: &GenerationParams,
) -> Result<String, OptimizeError> {
    let request = VlmRequest::new(vec![PromptPart::Text(prompt)], "instruction")
        .with_temperature(params.temperature)
        .with_seed(seed::sub_seed(params.seed, ((params.round as u64) << 32) | index as u64));
    let text = generator
        .complete(&request)
        .map_err(|source| OptimizeError::Generator { index, source })?;
    let text = text.trim();
    if text.is_empty() {
        return Err(OptimizeError::EmptyCandidate { index });
    }
    Ok(text.to_owned())
}

/// One generator call per hint. With `history`, its `keep_top` best entries
/// are appended to every meta-prompt.
pub fn generate_candidates(
    generator: &dyn VlmProvider,
    signature: &SeedSignature,
    hints: &[HintSample],
    history: Option<&[CandidateInstruction]>,
    params: &GenerationParams,
) -> Result<Vec<CandidateInstruction>, OptimizeError> {
    let seed_text = signature.render()?;
    let top = history.map(|h| top_scored(h, params.keep_top)).unwrap_or_default();
    let origin = if top.is_empty() {
        CandidateOrigin::Generated
    } else {
        CandidateOrigin::Rewrite
    };
    hints
        .iter()
        .enumerate()
        .map(|(index, hint)| {
            let text = ask(generator, build_meta_prompt(&seed_text, Some(hint), &top), index, params)?;
            Ok(CandidateInstruction {
                text,
                hint: Some(hint.clone()),
                round: params.round,
                index,
                val_score: None,
                origin,
            })
        })
        .collect()
}

/// `n` unhinted generator calls, conditioned on the best of `history` when
/// it has scored entries.
pub fn generate_rewrites(
    generator: &dyn VlmProvider,
    signature: &SeedSignature,
    n: usize,
    history: &[CandidateInstruction],
    params: &GenerationParams,
) -> Result<Vec<CandidateInstruction>, OptimizeError> {
    let seed_text = signature.render()?;
    let top = top_scored(history, params.keep_top);
    let origin = if top.is_empty() {
        CandidateOrigin::Generated
    } else {
        CandidateOrigin::Rewrite
    };
    let prompt = build_meta_prompt(&seed_text, None, &top);
    (0..n)
        .map(|index| {
            Ok(CandidateInstruction {
                text: ask(generator, prompt.clone(), index, params)?,
                hint: None,
                round: params.round,
                index,
                val_score: None,
                origin,
            })
        })
        .collect()
}

/// Seed instruction followed by each hint suffix, without a generator.
pub fn generate_candidates_suffix_only(
    signature: &SeedSignature,
    hints: &[HintSample],
) -> Result<Vec<CandidateInstruction>, PromptError> {
    let seed_text = signature.render()?;
    Ok(hints
        .iter()
        .enumerate()
        .map(|(index, hint)| CandidateInstruction {
            text: format!("{seed_text} {}", hint.suffix_text),
            hint: Some(hint.clone()),
            round: 0,
            index,
            val_score: None,
            origin: CandidateOrigin::SuffixOnly,
        })
        .collect())
}
