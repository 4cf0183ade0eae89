//! Deterministic stand-ins for the VLM and the detector.
//!
//! The simulated VLM answers from a per-(image, sublabel) latent score. It is
//! conservative by default (threshold 0.8) and responds to two prompt levers:
//! a confidence percentage in the instruction replaces the threshold, and
//! demonstrations add a bonus proportional to their similarity to the query.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    Bbox, CallContext, ProviderError, RawDetection, RegionProvider, VlmProvider, VlmRequest,
};
use crate::data::{cosine, DataError, EmbeddingStore, ImageRecord};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedOracleConfig {
    /// image id -> sublabel id -> latent score in [0, 1].
    pub latent_scores: BTreeMap<String, BTreeMap<String, f64>>,
    /// Answers for the human-presence filter; unknown images count as present.
    #[serde(default)]
    pub human_present: BTreeMap<String, u8>,
    pub default_threshold: f64,
    pub demo_bonus_weight: f64,
    pub balance_bonus_weight: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SimulatedOracleConfig {
    fn default() -> Self {
        Self {
            latent_scores: BTreeMap::new(),
            human_present: BTreeMap::new(),
            default_threshold: 0.8,
            demo_bonus_weight: 0.15,
            balance_bonus_weight: 0.05,
            noise_scale: 0.05,
            seed: 0,
        }
    }
}

impl SimulatedOracleConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        let knobs = [
            self.default_threshold,
            self.demo_bonus_weight,
            self.balance_bonus_weight,
            self.noise_scale,
        ];
        if knobs.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidRequest("oracle constants must be finite".into()));
        }
        for (image, scores) in &self.latent_scores {
            for (sublabel, &s) in scores {
                if !(0.0..=1.0).contains(&s) {
                    return Err(ProviderError::InvalidRequest(format!(
                        "latent score {s} for ({image}, {sublabel}) outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn latent(&self, image_id: &str, sublabel_id: &str) -> Option<f64> {
        self.latent_scores.get(image_id)?.get(sublabel_id).copied()
    }

    pub fn set_latent(&mut self, image_id: &str, sublabel_id: &str, score: f64) {
        self.latent_scores
            .entry(image_id.to_owned())
            .or_default()
            .insert(sublabel_id.to_owned(), score);
    }
}

static PERCENT_BEFORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d{1,3}(?:\.\d+)?)\s*%\s*confidence").unwrap());
static PERCENT_AFTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)confidence[^%\d.]{0,40}?(\d{1,3}(?:\.\d+)?)\s*%").unwrap());

/// Reads a decision threshold from text such as "at least 30% confidence" or
/// "a confidence level of at least 77%". The earliest mention wins.
pub fn parse_confidence_threshold(text: &str) -> Option<f64> {
    let before = PERCENT_BEFORE.captures(text);
    let after = PERCENT_AFTER.captures(text);
    let pick = match (before, after) {
        (Some(a), Some(b)) => {
            if a.get(0)?.start() <= b.get(0)?.start() {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => return None,
    };
    let pct: f64 = pick[1].parse().ok()?;
    (0.0..=100.0).contains(&pct).then_some(pct / 100.0)
}

/// The oracle decision rule.
///
/// `latent + alpha * q + noise >= t`, where `t` comes from the instruction's
/// confidence percentage (else `default_threshold`), `q` is the mean clipped
/// cosine similarity of the demonstrations to the query plus `beta` when the
/// demonstration labels are exactly balanced, and the noise is a seeded hash
/// of (image, sublabel, instruction) scaled into `[-noise_scale, noise_scale]`.
pub fn oracle_classify(
    config: &SimulatedOracleConfig,
    request: &VlmRequest,
    store: &EmbeddingStore,
) -> Result<u8, ProviderError> {
    match &request.context {
        CallContext::Specialist {
            image_id,
            sublabel_id,
            demos,
        } => {
            let latent =
                config
                    .latent(image_id, sublabel_id)
                    .ok_or_else(|| ProviderError::MissingLatent {
                        image_id: image_id.clone(),
                        sublabel_id: sublabel_id.clone(),
                    })?;
            let instruction = request.instruction().unwrap_or_default();
            let threshold =
                parse_confidence_threshold(instruction).unwrap_or(config.default_threshold);
            let quality = demo_quality(config, image_id, demos, store)?;
            let instruction_hash = seed::stable_hash([instruction.as_bytes()]);
            let u = seed::signed_unit(seed::stable_hash([
                &config.seed.to_le_bytes()[..],
                image_id.as_bytes(),
                sublabel_id.as_bytes(),
                &instruction_hash.to_le_bytes()[..],
            ]));
            let score = latent + config.demo_bonus_weight * quality + config.noise_scale * u;
            Ok(u8::from(score >= threshold))
        }
        CallContext::HumanFilter { image_id } => {
            Ok(config.human_present.get(image_id).copied().unwrap_or(1))
        }
        CallContext::None => Err(ProviderError::InvalidRequest(
            "simulated VLM needs a call context".into(),
        )),
    }
}

fn demo_quality(
    config: &SimulatedOracleConfig,
    image_id: &str,
    demos: &[(String, u8)],
    store: &EmbeddingStore,
) -> Result<f64, DataError> {
    if demos.is_empty() {
        return Ok(0.0);
    }
    let query = store.get(image_id)?;
    let mut total = 0.0;
    for (id, _) in demos {
        total += cosine(query, store.get(id)?).max(0.0);
    }
    let mut quality = total / demos.len() as f64;
    let positives = demos.iter().filter(|(_, y)| *y == 1).count();
    if positives * 2 == demos.len() {
        quality += config.balance_bonus_weight;
    }
    Ok(quality)
}

/// [`VlmProvider`] answering with the oracle verdict as a JSON object.
pub struct SimulatedVlm {
    config: Arc<SimulatedOracleConfig>,
    store: Arc<EmbeddingStore>,
}

impl SimulatedVlm {
    pub fn new(config: SimulatedOracleConfig, store: Arc<EmbeddingStore>) -> Result<Self, ProviderError> {
        config.validate()?;
        Ok(Self {
            config: Arc::new(config),
            store,
        })
    }

    pub fn config(&self) -> &SimulatedOracleConfig {
        &self.config
    }
}

impl VlmProvider for SimulatedVlm {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let verdict = oracle_classify(&self.config, request, &self.store)?;
        Ok(format!("{{\"{}\": {verdict}}}", request.label_name))
    }
}

#[derive(Deserialize)]
struct LatentLine {
    id: String,
    scores: BTreeMap<String, f64>,
    #[serde(default)]
    human_present: Option<u8>,
}

/// Reads a latents file (`{"id", "scores": {sublabel: score}, "human_present"}`
/// per line) into a config with default constants.
pub fn load_latents(path: impl AsRef<Path>) -> Result<SimulatedOracleConfig, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_latents(BufReader::new(file))
}

pub fn parse_latents(reader: impl BufRead) -> Result<SimulatedOracleConfig, DataError> {
    let mut config = SimulatedOracleConfig::default();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let parse_err = |message: String| DataError::Parse { line, message };
        let text = text.map_err(|e| parse_err(e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let entry: LatentLine = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        if entry.scores.values().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(parse_err(format!("latent score for {:?} outside [0, 1]", entry.id)));
        }
        if let Some(h) = entry.human_present {
            if h > 1 {
                return Err(parse_err("human_present must be 0 or 1".into()));
            }
            config.human_present.insert(entry.id.clone(), h);
        }
        if config.latent_scores.insert(entry.id.clone(), entry.scores).is_some() {
            return Err(DataError::DuplicateId { line, id: entry.id });
        }
    }
    Ok(config)
}

/// Hash-driven detector: each (image, query) gets 0..=`max_boxes` boxes with
/// uniform scores. Explicit boxes can be pinned per (image, query).
pub struct SimulatedDetector {
    seed: u64,
    max_boxes: u32,
    pinned: BTreeMap<(String, String), Vec<RawDetection>>,
}

impl SimulatedDetector {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            max_boxes: 3,
            pinned: BTreeMap::new(),
        }
    }

    pub fn with_max_boxes(mut self, max_boxes: u32) -> Self {
        self.max_boxes = max_boxes;
        self
    }

    pub fn pin(&mut self, image_id: &str, query: &str, boxes: Vec<RawDetection>) {
        self.pinned.insert((image_id.to_owned(), query.to_owned()), boxes);
    }
}

impl RegionProvider for SimulatedDetector {
    fn detect(&self, image: &ImageRecord, query: &str) -> Result<Vec<RawDetection>, ProviderError> {
        if let Some(boxes) = self.pinned.get(&(image.id.clone(), query.to_owned())) {
            return Ok(boxes.clone());
        }
        let base = seed::stable_hash([
            &self.seed.to_le_bytes()[..],
            image.id.as_bytes(),
            query.as_bytes(),
        ]);
        let count = base % u64::from(self.max_boxes + 1);
        let unit = |k: u64| (seed::signed_unit(seed::sub_seed(base, k)) + 1.0) / 2.0;
        let (w, h) = (f64::from(image.width), f64::from(image.height));
        Ok((0..count)
            .map(|i| {
                let k = 5 * i;
                let bw = w * (0.1 + 0.4 * unit(k));
                let bh = h * (0.1 + 0.4 * unit(k + 1));
                let x0 = ((w - bw) * unit(k + 2)).floor();
                let y0 = ((h - bh) * unit(k + 3)).floor();
                RawDetection {
                    bbox: Bbox::new(x0, y0, (x0 + bw).ceil().min(w), (y0 + bh).ceil().min(h)),
                    score: unit(k + 4),
                }
            })
            .collect())
    }
}
