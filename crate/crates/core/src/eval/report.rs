use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{confusion, prf1, MetricError, MetricReport, SuiteReport};
use crate::pipeline::PredictionTrace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// The evaluation report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: SuiteMetrics,
    pub benchmarks: Vec<BenchmarkEntry>,
    pub errors_skipped: u64,
}

impl EvalReport {
    pub fn new(suite: &SuiteReport, errors_skipped: u64) -> Self {
        Self {
            suite: SuiteMetrics {
                precision: suite.precision,
                recall: suite.recall,
                f1: suite.f1,
            },
            benchmarks: suite
                .per_benchmark
                .iter()
                .map(|r| BenchmarkEntry {
                    name: r.benchmark_name.clone(),
                    tp: r.counts.tp,
                    fp: r.counts.fp,
                    fn_: r.counts.fn_,
                    tn: r.counts.tn,
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                })
                .collect(),
            errors_skipped,
        }
    }
}

/// Metrics of one benchmark from prediction traces. Traces with an error are
/// skipped and counted.
pub fn score_traces(
    name: &str,
    traces: &[PredictionTrace],
    labels: &HashMap<String, u8>,
) -> Result<(MetricReport, u64), MetricError> {
    let mut predictions = Vec::with_capacity(traces.len());
    let mut truth = Vec::with_capacity(traces.len());
    let mut skipped = 0;
    for t in traces {
        match (&t.error, labels.get(&t.image_id)) {
            (None, Some(&y)) => {
                predictions.push(t.y);
                truth.push(y);
            }
            _ => skipped += 1,
        }
    }
    let mut report = prf1(&confusion(&predictions, &truth)?)?;
    report.benchmark_name = name.to_owned();
    Ok((report, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::suite_report;

    fn trace(id: &str, y: u8, error: bool) -> PredictionTrace {
        PredictionTrace {
            image_id: id.into(),
            per_specialist: Vec::new(),
            y,
            error: error.then(|| "boom".into()),
        }
    }

    #[test]
    fn errors_are_skipped() {
        let labels: HashMap<_, _> = [("a", 1), ("b", 0), ("c", 1)].map(|(k, v)| (k.to_owned(), v)).into();
        let traces = [trace("a", 1, false), trace("b", 1, false), trace("c", 0, true)];
        let (r, skipped) = score_traces("bench", &traces, &labels).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!((r.counts.tp, r.counts.fp), (1, 1));
        assert_eq!(r.benchmark_name, "bench");
    }

    #[test]
    fn file_shape() {
        let labels: HashMap<_, _> = [("a", 1)].map(|(k, v)| (k.to_owned(), v)).into();
        let (r, _) = score_traces("x", &[trace("a", 1, false)], &labels).unwrap();
        let report = EvalReport::new(&suite_report(&[r]).unwrap(), 0);
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["suite"]["f1"], 1.0);
        assert_eq!(v["benchmarks"][0]["fn"], 0);
        assert_eq!(v["errors_skipped"], 0);
    }
}
