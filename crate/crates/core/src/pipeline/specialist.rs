use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{crop_with_padding, PipelineError};
use crate::data::{EmbeddingStore, ImageRecord, Sublabel, SublabelDataset};
use crate::icl::{
    crop_embedding_key, pair_counterfactual, select_dynamic_few_shot, DemoImages, Demonstration, PairSource,
    RetrieveOn,
};
use crate::providers::{
    propose_regions, vlm_classify, CallContext, ImageRef, PixelBox, PromptPart, RegionProvider, RetryPolicy,
    VlmProvider, VlmRequest,
};
use crate::seed;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MAX_REGIONS: usize = 8;

/// Detector query and padding for the known body-part sublabels; anything
/// else crops whole humans.
pub fn default_crop_target(sublabel: &Sublabel) -> (&'static str, f64) {
    let key = format!("{} {}", sublabel.id, sublabel.label_name).to_lowercase();
    if key.contains("hand") {
        ("hand", 0.5)
    } else if key.contains("face") {
        ("face", 0.25)
    } else {
        ("human", 0.15)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialistSpec {
    pub sublabel_id: String,
    pub label_name: String,
    pub description: String,
    pub detection_query: String,
    pub padding_fraction: f64,
    pub score_threshold: f64,
    pub max_regions: usize,
}

impl SpecialistSpec {
    pub fn for_sublabel(sublabel: &Sublabel) -> Self {
        let (query, padding) = default_crop_target(sublabel);
        Self {
            sublabel_id: sublabel.id.clone(),
            label_name: sublabel.label_name.clone(),
            description: sublabel.description.clone(),
            detection_query: query.to_owned(),
            padding_fraction: padding,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            max_regions: DEFAULT_MAX_REGIONS,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidSpec(format!("{}: {m}", self.sublabel_id)));
        if self.detection_query.trim().is_empty() {
            return bad("detection_query is empty".into());
        }
        if !self.padding_fraction.is_finite() || self.padding_fraction < 0.0 {
            return bad(format!("padding_fraction {} must be finite and >= 0", self.padding_fraction));
        }
        if !self.score_threshold.is_finite() {
            return bad("score_threshold must be finite".into());
        }
        if self.max_regions == 0 {
            return bad("max_regions must be at least 1".into());
        }
        Ok(())
    }
}

/// Where a specialist's demonstrations come from at inference time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IclPlan {
    ZeroShot,
    Static {
        demos: Vec<Demonstration>,
    },
    /// Per-query retrieval from `corpus`.
    Dynamic {
        m: usize,
        counterfactual: bool,
        #[serde(default)]
        retrieve_on: RetrieveOn,
        corpus: SublabelDataset,
    },
}

impl IclPlan {
    pub fn needs_embeddings(&self) -> bool {
        matches!(self, Self::Dynamic { .. })
    }

    /// Every image id the plan may put in a prompt.
    pub fn referenced_ids(&self) -> Vec<&str> {
        match self {
            Self::ZeroShot => Vec::new(),
            Self::Static { demos } => demos.iter().map(|d| d.image_id.as_str()).collect(),
            Self::Dynamic { corpus, .. } => corpus.items.iter().map(|i| i.image_id.as_str()).collect(),
        }
    }
}

/// Model services and call settings shared by every specialist.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub vlm: &'a dyn VlmProvider,
    pub detector: &'a dyn RegionProvider,
    pub embeddings: Option<&'a EmbeddingStore>,
    pub retry: RetryPolicy,
    pub temperature: f64,
}

impl<'a> Providers<'a> {
    pub fn new(vlm: &'a dyn VlmProvider, detector: &'a dyn RegionProvider) -> Self {
        Self {
            vlm,
            detector,
            embeddings: None,
            retry: RetryPolicy::default(),
            temperature: 0.0,
        }
    }

    pub fn with_embeddings(mut self, store: &'a EmbeddingStore) -> Self {
        self.embeddings = Some(store);
        self
    }
}

/// Retrieved demonstrations keyed by query embedding id. Retrieval does not
/// depend on the instruction, so one cache serves a whole optimizer run.
#[derive(Default)]
pub struct DemoCache {
    entries: Mutex<HashMap<String, Arc<Vec<Demonstration>>>>,
}

impl DemoCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_try<F>(&self, key: &str, f: F) -> Result<Arc<Vec<Demonstration>>, PipelineError>
    where
        F: FnOnce() -> Result<Vec<Demonstration>, PipelineError>,
    {
        if let Some(hit) = self.entries.lock().unwrap().get(key) {
            return Ok(hit.clone());
        }
        let demos = Arc::new(f()?);
        self.entries.lock().unwrap().insert(key.to_owned(), demos.clone());
        Ok(demos)
    }
}

/// Everything a specialist needs to classify one image.
pub struct SpecialistRun<'a> {
    pub spec: &'a SpecialistSpec,
    pub instruction: &'a str,
    pub plan: &'a IclPlan,
    pub demo_images: DemoImages,
    /// Needed to resolve demonstration records when cropping demos.
    pub records: Option<&'a HashMap<String, ImageRecord>>,
    pub cache: Option<&'a DemoCache>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropTrace {
    pub region: PixelBox,
    /// Detector score; absent for the full-image fallback.
    pub score: Option<f64>,
    pub y_crop: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialistTrace {
    pub sublabel_id: String,
    pub crops: Vec<CropTrace>,
    pub y_spec: u8,
    #[serde(default)]
    pub full_image_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A specialist that failed mid-image, with the crops finished before the
/// failure.
#[derive(Debug)]
pub struct SpecialistFailure {
    pub partial: SpecialistTrace,
    pub error: PipelineError,
}

/// Logical OR of binary verdicts.
pub fn aggregate(verdicts: &[u8]) -> Result<u8, PipelineError> {
    if verdicts.is_empty() {
        return Err(PipelineError::EmptyInput("no verdicts to aggregate"));
    }
    Ok(u8::from(verdicts.contains(&1)))
}

fn demos_for(
    run: &SpecialistRun<'_>,
    providers: &Providers<'_>,
    image: &ImageRecord,
    region: Option<PixelBox>,
) -> Result<Arc<Vec<Demonstration>>, PipelineError> {
    let IclPlan::Dynamic {
        m,
        counterfactual,
        retrieve_on,
        corpus,
    } = run.plan
    else {
        return Ok(Arc::new(match run.plan {
            IclPlan::Static { demos } => demos.clone(),
            _ => Vec::new(),
        }));
    };
    let store = providers
        .embeddings
        .ok_or_else(|| PipelineError::MissingEmbeddings(run.spec.sublabel_id.clone()))?;
    let key = match (retrieve_on, region) {
        (RetrieveOn::Crop, Some(r)) => crop_embedding_key(&image.id, &r),
        _ => image.id.clone(),
    };
    let retrieve = || {
        let query = store.get(&key)?;
        let owned;
        let corpus = if corpus.items.iter().any(|i| i.image_id == image.id) {
            owned = SublabelDataset {
                sublabel_id: corpus.sublabel_id.clone(),
                items: corpus.items.iter().filter(|i| i.image_id != image.id).cloned().collect(),
            };
            &owned
        } else {
            corpus
        };
        let demos = if *counterfactual {
            pair_counterfactual(PairSource::Retrieval { query }, corpus, store, *m)?
        } else {
            select_dynamic_few_shot(query, corpus, store, *m)?
        };
        Ok(demos)
    };
    match run.cache {
        Some(cache) => cache.get_or_try(&format!("{}\u{1f}{key}", run.spec.sublabel_id), retrieve),
        None => retrieve().map(Arc::new),
    }
}

fn demo_image_ref(
    run: &SpecialistRun<'_>,
    providers: &Providers<'_>,
    demo: &Demonstration,
) -> Result<ImageRef, PipelineError> {
    if run.demo_images == DemoImages::Full {
        return Ok(ImageRef::Id(demo.image_id.clone()));
    }
    let record = run
        .records
        .and_then(|r| r.get(&demo.image_id))
        .ok_or_else(|| PipelineError::UnknownImage(demo.image_id.clone()))?;
    let spec = run.spec;
    let regions = propose_regions(providers.detector, record, &spec.detection_query, spec.score_threshold, 1)
        .map_err(|source| PipelineError::Provider {
            sublabel_id: spec.sublabel_id.clone(),
            source,
        })?;
    Ok(match regions.first() {
        Some(r) => ImageRef::Crop {
            id: demo.image_id.clone(),
            region: crop_with_padding(record.width, record.height, &r.bbox, spec.padding_fraction)?,
        },
        None => ImageRef::Id(demo.image_id.clone()),
    })
}

fn classify_crop(
    run: &SpecialistRun<'_>,
    providers: &Providers<'_>,
    image: &ImageRecord,
    region: Option<PixelBox>,
    crop_index: usize,
) -> Result<u8, PipelineError> {
    let spec = run.spec;
    let demos = demos_for(run, providers, image, region)?;
    let mut parts = vec![PromptPart::Text(run.instruction.to_owned())];
    for demo in demos.iter() {
        parts.push(PromptPart::Image(demo_image_ref(run, providers, demo)?));
        parts.push(PromptPart::Text(format!("{}={}", spec.label_name, demo.label)));
    }
    parts.push(PromptPart::Image(ImageRef::Id(image.id.clone())));
    if let Some(r) = region {
        parts.push(PromptPart::Image(ImageRef::Crop {
            id: image.id.clone(),
            region: r,
        }));
    }
    let request = VlmRequest::new(parts, &spec.label_name)
        .with_temperature(providers.temperature)
        .with_seed(seed::stable_hash([
            image.id.as_bytes(),
            spec.sublabel_id.as_bytes(),
            &(crop_index as u64).to_le_bytes()[..],
        ]))
        .with_context(CallContext::Specialist {
            image_id: image.id.clone(),
            sublabel_id: spec.sublabel_id.clone(),
            demos: demos.iter().map(|d| (d.image_id.clone(), d.label)).collect(),
        });
    vlm_classify(providers.vlm, &request, &providers.retry).map_err(|source| PipelineError::Provider {
        sublabel_id: spec.sublabel_id.clone(),
        source,
    })
}

/// Classifies one image with one specialist.
///
/// Each detected region is padded and sent with the original image. With no
/// detections the full image is classified once. The verdict is the OR over
/// crops; when `trace` is false evaluation stops at the first positive crop.
#[allow(clippy::result_large_err)]
pub fn run_specialist(
    run: &SpecialistRun<'_>,
    providers: &Providers<'_>,
    image: &ImageRecord,
    trace: bool,
) -> Result<SpecialistTrace, SpecialistFailure> {
    let spec = run.spec;
    let mut out = SpecialistTrace {
        sublabel_id: spec.sublabel_id.clone(),
        crops: Vec::new(),
        y_spec: 0,
        full_image_fallback: false,
        error: None,
    };
    let fail = |mut partial: SpecialistTrace, error: PipelineError| {
        partial.error = Some(error.to_string());
        partial.y_spec = u8::from(partial.crops.iter().any(|c| c.y_crop == 1));
        SpecialistFailure { partial, error }
    };

    let proposals = match propose_regions(
        providers.detector,
        image,
        &spec.detection_query,
        spec.score_threshold,
        spec.max_regions,
    ) {
        Ok(p) => p,
        Err(source) => {
            let error = PipelineError::Provider {
                sublabel_id: spec.sublabel_id.clone(),
                source,
            };
            return Err(fail(out, error));
        }
    };

    if proposals.is_empty() {
        out.full_image_fallback = true;
        match classify_crop(run, providers, image, None, 0) {
            Ok(y) => {
                out.crops.push(CropTrace {
                    region: PixelBox::full(image.width, image.height),
                    score: None,
                    y_crop: y,
                });
                out.y_spec = y;
                return Ok(out);
            }
            Err(e) => return Err(fail(out, e)),
        }
    }

    for (i, proposal) in proposals.iter().enumerate() {
        let result = crop_with_padding(image.width, image.height, &proposal.bbox, spec.padding_fraction)
            .and_then(|region| Ok((region, classify_crop(run, providers, image, Some(region), i)?)));
        match result {
            Ok((region, y)) => {
                out.crops.push(CropTrace {
                    region,
                    score: Some(proposal.score),
                    y_crop: y,
                });
                if y == 1 && !trace {
                    break;
                }
            }
            Err(e) => return Err(fail(out, e)),
        }
    }
    let verdicts: Vec<u8> = out.crops.iter().map(|c| c.y_crop).collect();
    out.y_spec = aggregate(&verdicts).expect("at least one crop");
    Ok(out)
}
