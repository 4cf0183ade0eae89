use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintCategory {
    Recall,
    Balanced,
    Precision,
}

impl HintCategory {
    /// Recall below 30, precision above 70, balanced in between (both
    /// boundaries are balanced).
    pub fn for_threshold(threshold: u8) -> Self {
        if threshold < 30 {
            Self::Recall
        } else if threshold > 70 {
            Self::Precision
        } else {
            Self::Balanced
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Recall => "recall",
            Self::Balanced => "balanced",
            Self::Precision => "precision",
        }
    }

    fn template(self) -> &'static str {
        match self {
            Self::Recall => "Propose an instruction that encourages positive predictions when there is at least {threshold}% confidence. This favors high recall over precision.",
            Self::Precision => "Propose an instruction that requires {threshold}% confidence before making a positive prediction. This favors high precision over recall.",
            Self::Balanced => "Propose an instruction that makes positive predictions at {threshold}% confidence, balancing precision and recall.",
        }
    }
}

/// A confidence threshold and the generator suffix asking for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintSample {
    pub threshold: u8,
    pub category: HintCategory,
    pub suffix_text: String,
}

impl HintSample {
    /// # Panics
    /// If `threshold > 100`.
    pub fn from_threshold(threshold: u8) -> Self {
        assert!(threshold <= 100, "threshold {threshold} outside 0..=100");
        let category = HintCategory::for_threshold(threshold);
        Self {
            threshold,
            category,
            suffix_text: category.template().replace("{threshold}", &threshold.to_string()),
        }
    }
}

/// `n` thresholds drawn uniformly from the integers 0..=100.
pub fn sample_threshold_hints(n: usize, seed: u64) -> Vec<HintSample> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| HintSample::from_threshold(rng.random_range(0..=100u8)))
        .collect()
}
