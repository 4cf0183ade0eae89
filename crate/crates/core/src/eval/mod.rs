//! Positive-class metrics, suite aggregation and rater-agreement statistics.

mod agreement;
mod report;

use serde::{Deserialize, Serialize};

pub use agreement::{cohens_kappa, majority_vote, pairwise_kappa};
pub use report::{score_traces, BenchmarkEntry, EvalReport, SuiteMetrics};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no items to score")]
    Empty,
    #[error("recall is undefined: no ground-truth positives")]
    UndefinedMetric,
    #[error("rating matrix is ragged: rater {rater} has {found} items, expected {expected}")]
    Ragged {
        rater: usize,
        expected: usize,
        found: usize,
    },
    #[error("value {0} is not binary")]
    NotBinary(u8),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, prediction: u8, label: u8) {
        match (prediction, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

/// Counts with 1 as the positive class.
pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        for v in [p, y] {
            if v > 1 {
                return Err(MetricError::NotBinary(v));
            }
        }
        counts.add(p, y);
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub benchmark_name: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 for the positive class.
///
/// Precision is 0 when nothing was predicted positive. Recall (and so F1)
/// is undefined without ground-truth positives, which is an error.
pub fn prf1(counts: &ConfusionCounts) -> Result<MetricReport, MetricError> {
    if counts.total() == 0 {
        return Err(MetricError::Empty);
    }
    if counts.tp + counts.fn_ == 0 {
        return Err(MetricError::UndefinedMetric);
    }
    let precision = if counts.tp + counts.fp == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let recall = counts.tp as f64 / (counts.tp + counts.fn_) as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricReport {
        benchmark_name: String::new(),
        counts: *counts,
        precision,
        recall,
        f1,
    })
}

/// Positive-class F1 over a whole prediction set.
pub fn f1_score(predictions: &[u8], labels: &[u8]) -> Result<f64, MetricError> {
    Ok(prf1(&confusion(predictions, labels)?)?.f1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub per_benchmark: Vec<MetricReport>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unweighted means over benchmarks.
pub fn suite_report(per_benchmark: &[MetricReport]) -> Result<SuiteReport, MetricError> {
    if per_benchmark.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = per_benchmark.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| per_benchmark.iter().map(f).sum::<f64>() / n;
    Ok(SuiteReport {
        per_benchmark: per_benchmark.to_vec(),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
    })
}
