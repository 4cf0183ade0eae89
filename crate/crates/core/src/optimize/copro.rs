use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    generate_candidates, generate_candidates_suffix_only, generate_rewrites, sample_threshold_hints,
    CandidateInstruction, GenerationParams, HintCategory, OptimizeError, SeedSignature,
};
use crate::icl::BoxError;
use crate::providers::VlmProvider;
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    F1Positive,
}

/// How each round's candidate pool is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Generator with sampled confidence hints in round 0, scored rewrites after.
    #[default]
    FullSpectrum,
    /// Seed plus hint suffix, fresh hints every round, no generator.
    SuffixOnly,
    /// Generator without hints.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub breadth: usize,
    pub depth: usize,
    pub keep_top: usize,
    pub generator_temperature: f64,
    pub seed: u64,
    pub metric: Metric,
    pub pool: CandidatePool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            breadth: 8,
            depth: 3,
            keep_top: 3,
            generator_temperature: 1.0,
            seed: 0,
            metric: Metric::F1Positive,
            pool: CandidatePool::FullSpectrum,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: String| Err(OptimizeError::InvalidConfig(m));
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.breadth < 1 {
            return bad("breadth must be at least 1".into());
        }
        if self.keep_top < 1 || self.keep_top > self.breadth {
            return bad(format!("keep_top = {} must be in 1..={}", self.keep_top, self.breadth));
        }
        if !self.generator_temperature.is_finite() || self.generator_temperature < 0.0 {
            return bad(format!("generator_temperature {} is invalid", self.generator_temperature));
        }
        Ok(())
    }

    fn needs_generator(&self) -> bool {
        self.pool != CandidatePool::SuffixOnly
    }
}

/// Scores one instruction on the validation split.
pub trait CandidateScorer {
    fn score(&self, instruction: &str) -> Result<f64, BoxError>;
}

impl<F> CandidateScorer for F
where
    F: Fn(&str) -> Result<f64, BoxError>,
{
    fn score(&self, instruction: &str) -> Result<f64, BoxError> {
        self(instruction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub best: CandidateInstruction,
    /// Every scored candidate in generation order.
    pub history: Vec<CandidateInstruction>,
}

impl OptimizationOutcome {
    pub fn seed_score(&self) -> f64 {
        self.history[0].val_score.unwrap_or(0.0)
    }
}

/// COPRO-style search.
///
/// Round 0 holds the seed instruction (index 0) and `breadth` new
/// candidates. Each later round writes `breadth` candidates from the
/// `keep_top` best so far. Identical texts are scored once. The best
/// candidate, with ties to the earliest round and then the lowest index, is
/// never worse than the seed.
pub fn optimize_instruction(
    config: &OptimizerConfig,
    signature: &SeedSignature,
    generator: Option<&dyn VlmProvider>,
    scorer: &dyn CandidateScorer,
) -> Result<OptimizationOutcome, OptimizeError> {
    config.validate()?;
    let generator = match (generator, config.needs_generator()) {
        (Some(g), _) => Some(g),
        (None, false) => None,
        (None, true) => {
            return Err(OptimizeError::InvalidConfig(format!(
                "{:?} pool needs an instruction generator",
                config.pool
            )))
        }
    };
    let mut history: Vec<CandidateInstruction> = Vec::new();
    let mut cache: HashMap<String, f64> = HashMap::new();

    for round in 0..config.depth {
        let pool = match build_round(config, signature, generator, round, &history) {
            Ok(p) => p,
            Err(e) => return Err(abort(round, history, e)),
        };
        let offset = usize::from(round == 0);
        let mut incoming = Vec::with_capacity(pool.len() + offset);
        if round == 0 {
            incoming.push(CandidateInstruction::seed(signature.render()?));
        }
        incoming.extend(pool.into_iter().enumerate().map(|(i, mut c)| {
            c.round = round;
            c.index = i + offset;
            c
        }));
        for mut candidate in incoming {
            let score = match cache.get(&candidate.text) {
                Some(&s) => s,
                None => match scorer.score(&candidate.text) {
                    Ok(s) => {
                        cache.insert(candidate.text.clone(), s);
                        s
                    }
                    Err(source) => {
                        let index = candidate.index;
                        return Err(abort(round, history, OptimizeError::Scoring { index, source }));
                    }
                },
            };
            log::debug!("round {round} candidate {}: {score:.4}", candidate.index);
            candidate.val_score = Some(score);
            history.push(candidate);
        }
    }

    let mut best = &history[0];
    for c in &history[1..] {
        if c.val_score > best.val_score {
            best = c;
        }
    }
    Ok(OptimizationOutcome {
        best: best.clone(),
        history,
    })
}

fn build_round(
    config: &OptimizerConfig,
    signature: &SeedSignature,
    generator: Option<&dyn VlmProvider>,
    round: usize,
    history: &[CandidateInstruction],
) -> Result<Vec<CandidateInstruction>, OptimizeError> {
    let params = GenerationParams {
        round,
        keep_top: config.keep_top,
        temperature: config.generator_temperature,
        seed: seed::named_seed(config.seed, "generator"),
    };
    let hint_seed = seed::sub_seed(seed::named_seed(config.seed, "hints"), round as u64);
    match (config.pool, generator) {
        (CandidatePool::SuffixOnly, _) => Ok(generate_candidates_suffix_only(
            signature,
            &sample_threshold_hints(config.breadth, hint_seed),
        )?),
        (CandidatePool::FullSpectrum, Some(g)) if round == 0 => {
            let hints = sample_threshold_hints(config.breadth, hint_seed);
            generate_candidates(g, signature, &hints, None, &params)
        }
        (CandidatePool::FullSpectrum | CandidatePool::Plain, Some(g)) => {
            let history = if round == 0 { &[][..] } else { history };
            generate_rewrites(g, signature, config.breadth, history, &params)
        }
        (_, None) => unreachable!("generator presence checked by caller"),
    }
}

fn abort(round: usize, history: Vec<CandidateInstruction>, source: OptimizeError) -> OptimizeError {
    OptimizeError::Aborted {
        round,
        history,
        source: Box::new(source),
    }
}

/// One line of the optimization history report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub round: usize,
    pub hint_threshold: Option<u8>,
    pub category: Option<HintCategory>,
    pub text: String,
    pub val_f1: Option<f64>,
}

impl From<&CandidateInstruction> for HistoryRecord {
    fn from(c: &CandidateInstruction) -> Self {
        Self {
            round: c.round,
            hint_threshold: c.hint.as_ref().map(|h| h.threshold),
            category: c.hint.as_ref().map(|h| h.category),
            text: c.text.clone(),
            val_f1: c.val_score,
        }
    }
}

pub fn write_history(history: &[CandidateInstruction], mut out: impl Write) -> std::io::Result<()> {
    for c in history {
        serde_json::to_writer(&mut out, &HistoryRecord::from(c))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::pipeline::SINGLE_SUBLABEL_TEMPLATE;
    use crate::providers::parse_confidence_threshold;
    use crate::providers::scripted::FnVlm;
    use crate::providers::{SimulatedGenerator, VlmRequest};

    fn sig() -> SeedSignature {
        SeedSignature::new("deformed_hand", "a deformed hand", SINGLE_SUBLABEL_TEMPLATE).unwrap()
    }

    /// Prefers thresholds near 0.4, seed scores 0.1.
    fn by_threshold(text: &str) -> Result<f64, BoxError> {
        Ok(match parse_confidence_threshold(text) {
            Some(t) => 1.0 - (t - 0.4).abs(),
            None => 0.1,
        })
    }

    #[test]
    fn degenerate_identity_generator() {
        let identity = FnVlm(|r: &VlmRequest| {
            let p = r.instruction().unwrap();
            Ok(p.lines().find_map(|l| l.strip_prefix(super::super::SIGNATURE_MARKER)).unwrap().to_owned())
        });
        let config = OptimizerConfig {
            breadth: 1,
            depth: 1,
            keep_top: 1,
            pool: CandidatePool::Plain,
            ..Default::default()
        };
        let calls = Cell::new(0);
        let scorer = |_: &str| -> Result<f64, BoxError> {
            calls.set(calls.get() + 1);
            Ok(0.5)
        };
        let out = optimize_instruction(&config, &sig(), Some(&identity), &scorer).unwrap();
        assert_eq!(out.history.len(), 2);
        // identical text is scored once and the seed wins the tie
        assert_eq!(calls.get(), 1);
        assert_eq!(out.best.index, 0);
        assert_eq!(out.best.text, sig().render().unwrap());
    }

    #[test]
    fn never_worse_than_seed() {
        let generator = SimulatedGenerator::new(3);
        for pool in [CandidatePool::FullSpectrum, CandidatePool::Plain, CandidatePool::SuffixOnly] {
            let config = OptimizerConfig {
                pool,
                seed: 11,
                ..Default::default()
            };
            let out = optimize_instruction(&config, &sig(), Some(&generator), &by_threshold).unwrap();
            assert_eq!(out.history.len(), 1 + 8 * 3);
            assert!(out.best.val_score.unwrap() >= out.seed_score());
            let max = out.history.iter().filter_map(|c| c.val_score).fold(0.0, f64::max);
            assert_eq!(out.best.val_score, Some(max));
        }
    }

    #[test]
    fn full_spectrum_beats_plain_on_recall_task() {
        let generator = SimulatedGenerator::new(3);
        let run = |pool| {
            let config = OptimizerConfig {
                pool,
                seed: 4,
                ..Default::default()
            };
            optimize_instruction(&config, &sig(), Some(&generator), &by_threshold)
                .unwrap()
                .best
                .val_score
                .unwrap()
        };
        assert!(run(CandidatePool::FullSpectrum) > run(CandidatePool::Plain));
    }

    #[test]
    fn deterministic() {
        let generator = SimulatedGenerator::new(3);
        let config = OptimizerConfig {
            seed: 9,
            ..Default::default()
        };
        let a = optimize_instruction(&config, &sig(), Some(&generator), &by_threshold).unwrap();
        let b = optimize_instruction(&config, &sig(), Some(&generator), &by_threshold).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scoring_failure_keeps_partial_history() {
        let generator = SimulatedGenerator::new(3);
        let calls = Cell::new(0);
        let scorer = |_: &str| -> Result<f64, BoxError> {
            calls.set(calls.get() + 1);
            if calls.get() == 4 {
                Err("val sweep failed".into())
            } else {
                Ok(0.2)
            }
        };
        let err = optimize_instruction(&OptimizerConfig::default(), &sig(), Some(&generator), &scorer).unwrap_err();
        match err {
            OptimizeError::Aborted { round, history, source } => {
                assert_eq!(round, 0);
                assert_eq!(history.len(), 3);
                assert!(matches!(*source, OptimizeError::Scoring { index: 3, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_checks() {
        let bad = OptimizerConfig {
            keep_top: 9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(optimize_instruction(&OptimizerConfig::default(), &sig(), None, &by_threshold).is_err());
        let suffix = OptimizerConfig {
            pool: CandidatePool::SuffixOnly,
            ..Default::default()
        };
        assert!(optimize_instruction(&suffix, &sig(), None, &by_threshold).is_ok());
    }

    #[test]
    fn history_lines() {
        let generator = SimulatedGenerator::new(3);
        let out = optimize_instruction(&OptimizerConfig::default(), &sig(), Some(&generator), &by_threshold).unwrap();
        let mut buf = Vec::new();
        write_history(&out.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.history.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for key in ["round", "hint_threshold", "category", "text", "val_f1"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }
}
