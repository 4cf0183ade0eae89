use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_specialist, CompiledProgram, PipelineError, Providers, SpecialistRun, SpecialistTrace};
use crate::data::{DatasetManifest, ImageRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub image_id: String,
    pub per_specialist: Vec<SpecialistTrace>,
    pub y: u8,
    /// First provider failure; the image is excluded from metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionTrace {
    /// `y_spec` is the OR of its crops and `y` the OR of the specialists.
    pub fn check_invariants(&self) -> Result<(), String> {
        for s in &self.per_specialist {
            let or = u8::from(s.crops.iter().any(|c| c.y_crop == 1));
            if s.y_spec != or {
                return Err(format!("{}: {} y_spec {} != crop OR {or}", self.image_id, s.sublabel_id, s.y_spec));
            }
        }
        let or = u8::from(self.per_specialist.iter().any(|s| s.y_spec == 1));
        if self.y != or {
            return Err(format!("{}: y {} != specialist OR {or}", self.image_id, self.y));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictOptions {
    /// Worker threads issuing provider calls.
    pub max_in_flight: usize,
    /// Record every crop; when false specialists and crops stop at the
    /// first positive.
    pub trace: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            trace: true,
        }
    }
}

pub fn index_records(manifest: &DatasetManifest) -> HashMap<String, ImageRecord> {
    manifest.records.iter().map(|r| (r.id.clone(), r.clone())).collect()
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Classifies one image with every specialist of the program.
pub fn predict_one(
    program: &CompiledProgram,
    providers: &Providers<'_>,
    image: &ImageRecord,
    records: Option<&HashMap<String, ImageRecord>>,
    trace: bool,
) -> PredictionTrace {
    let mut out = PredictionTrace {
        image_id: image.id.clone(),
        per_specialist: Vec::with_capacity(program.specialists.len()),
        y: 0,
        error: None,
    };
    for s in &program.specialists {
        let run = SpecialistRun {
            spec: &s.spec,
            instruction: &s.instruction,
            plan: &s.icl.plan,
            demo_images: s.icl.selection.demo_images,
            records,
            cache: None,
        };
        match run_specialist(&run, providers, image, trace) {
            Ok(t) => out.per_specialist.push(t),
            Err(failure) => {
                out.error = Some(failure.error.to_string());
                out.per_specialist.push(failure.partial);
                break;
            }
        }
        if !trace && out.per_specialist.last().is_some_and(|t| t.y_spec == 1) {
            break;
        }
    }
    out.y = u8::from(out.per_specialist.iter().any(|t| t.y_spec == 1));
    out
}

/// One trace per image, in input order.
pub fn predict(
    program: &CompiledProgram,
    providers: &Providers<'_>,
    images: &[ImageRecord],
    records: Option<&HashMap<String, ImageRecord>>,
    options: PredictOptions,
) -> Result<Vec<PredictionTrace>, PipelineError> {
    if program.specialists.iter().any(|s| s.icl.plan.needs_embeddings()) && providers.embeddings.is_none() {
        return Err(PipelineError::MissingEmbeddings("dynamic retrieval".into()));
    }
    with_pool(options.max_in_flight, || {
        images
            .par_iter()
            .map(|image| predict_one(program, providers, image, records, options.trace))
            .collect()
    })
}
