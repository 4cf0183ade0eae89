//! A deterministic instruction writer standing in for the generator LLM.
//!
//! It reads the meta-prompt produced by [`crate::optimize`]: the seed
//! instruction after the signature marker, an optional confidence-hint
//! suffix, and an optional list of scored previous instructions. Without a
//! hint it writes conservative instructions (75-95% confidence). Rewrites
//! perturb the best previous threshold by -5..=+10 points.

use std::sync::LazyLock;

use regex::Regex;

use super::{parse_confidence_threshold, ProviderError, VlmProvider, VlmRequest};
use crate::optimize::{HintCategory, HISTORY_HEADER, SIGNATURE_MARKER};
use crate::seed;

static RECALL_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"encourages positive predictions when there is at least (\d{1,3})% confidence").unwrap()
});
static PRECISION_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"requires (\d{1,3})% confidence before making a positive prediction").unwrap()
});
static BALANCED_HINT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"makes positive predictions at (\d{1,3})% confidence").unwrap());
static HISTORY_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[\d+\] score (\d+(?:\.\d+)?): (.*)$").unwrap());

#[derive(Clone, Debug, Default)]
pub struct SimulatedGenerator {
    seed: u64,
}

impl SimulatedGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl VlmProvider for SimulatedGenerator {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let prompt: String = request.texts().collect::<Vec<_>>().join("\n");
        let seed_instruction = prompt
            .lines()
            .find_map(|l| l.strip_prefix(SIGNATURE_MARKER))
            .ok_or_else(|| ProviderError::InvalidRequest("meta-prompt has no signature".into()))?
            .trim()
            .to_owned();
        let noise = seed::stable_hash([
            &self.seed.to_le_bytes()[..],
            &request.seed.to_le_bytes()[..],
            &request.temperature.to_bits().to_le_bytes()[..],
            prompt.as_bytes(),
        ]);

        let threshold = if let Some(t) = hinted_threshold(&prompt) {
            t
        } else if let Some(best) = best_previous_threshold(&prompt) {
            let jitter = (noise % 16) as i64 - 5;
            (best + jitter).clamp(0, 100)
        } else {
            75 + (noise % 21) as i64
        };
        let t = threshold as u8;
        let body = match HintCategory::for_threshold(t) {
            HintCategory::Recall => format!(
                "Flag the artifact whenever you have at least {t}% confidence that it is present. Missing a real artifact is worse than a false alarm."
            ),
            HintCategory::Balanced => format!(
                "Make a positive prediction once you reach {t}% confidence, weighing false alarms and misses equally."
            ),
            HintCategory::Precision => format!(
                "Only flag clear and unmistakable artifacts: require {t}% confidence before making a positive prediction."
            ),
        };
        Ok(format!("{seed_instruction} {body}"))
    }
}

fn hinted_threshold(prompt: &str) -> Option<i64> {
    [&*RECALL_HINT, &*PRECISION_HINT, &*BALANCED_HINT]
        .iter()
        .find_map(|re| re.captures(prompt))
        .and_then(|c| c[1].parse().ok())
}

/// Threshold of the top-listed previous instruction; instructions without a
/// stated confidence read as the conservative default of 80%.
fn best_previous_threshold(prompt: &str) -> Option<i64> {
    let (_, history) = prompt.split_once(HISTORY_HEADER)?;
    let best = history.lines().find_map(|l| HISTORY_LINE.captures(l.trim()))?;
    let text = best.get(2)?.as_str();
    Some(
        parse_confidence_threshold(text)
            .map(|t| (t * 100.0).round() as i64)
            .unwrap_or(80),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::PromptPart;

    fn ask(prompt: &str) -> String {
        let req = VlmRequest::new(vec![PromptPart::Text(prompt.into())], "instruction");
        SimulatedGenerator::new(1).complete(&req).unwrap()
    }

    #[test]
    fn follows_hint() {
        let out = ask(&format!(
            "optimizer\n\n{SIGNATURE_MARKER}Seed text.\n\nPropose an instruction that encourages positive predictions when there is at least 20% confidence. This favors high recall over precision."
        ));
        assert!(out.starts_with("Seed text."));
        assert!(out.contains("at least 20% confidence"));
        assert_eq!(parse_confidence_threshold(&out), Some(0.2));
    }

    #[test]
    fn unhinted_is_conservative() {
        for i in 0..30 {
            let out = ask(&format!("optimizer {i}\n\n{SIGNATURE_MARKER}Seed."));
            let t = parse_confidence_threshold(&out).unwrap();
            assert!((0.75..=0.95).contains(&t), "{out}");
        }
    }

    #[test]
    fn rewrites_near_best() {
        let prompt = format!(
            "optimizer\n\n{SIGNATURE_MARKER}Seed.\n\n{HISTORY_HEADER}\n[1] score 0.9000: Seed. Flag it with at least 40% confidence.\n[2] score 0.5000: Seed."
        );
        let t = parse_confidence_threshold(&ask(&prompt)).unwrap();
        assert!((0.35..=0.50).contains(&t), "{t}");
    }

    #[test]
    fn missing_signature_is_error() {
        let req = VlmRequest::new(vec![PromptPart::Text("hello".into())], "instruction");
        assert!(SimulatedGenerator::new(0).complete(&req).is_err());
    }
}
