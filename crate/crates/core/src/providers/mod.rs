//! Interfaces to the external model services: VLM classification, region
//! proposals and (file-backed) embeddings.
//!
//! Every VLM call goes through [`vlm_classify`], which appends the response
//! formatting directive, parses the verdict, and retries unparseable answers
//! at a higher temperature. Providers only move text.

mod generator;
mod oracle;
mod parse;
mod regions;
pub mod remote;
pub mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::DataError;

pub use generator::SimulatedGenerator;
pub use oracle::{
    load_latents, oracle_classify, parse_confidence_threshold, parse_latents, SimulatedDetector,
    SimulatedOracleConfig, SimulatedVlm,
};
pub use parse::parse_verdict;
pub use regions::{propose_regions, Bbox, RawDetection, RegionProposal, RegionProvider};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited after {attempts} attempts (retry after {retry_after:?})")]
    RateLimited { attempts: u32, retry_after: Duration },
    #[error("no {label_name} verdict in response after {attempts} attempts; last response: {last_response:?}")]
    Unparseable {
        label_name: String,
        attempts: u32,
        last_response: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no latent score for image {image_id:?}, sublabel {sublabel_id:?}")]
    MissingLatent {
        image_id: String,
        sublabel_id: String,
    },
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Integer pixel rectangle, half-open on the right and bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelBox {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImageRef {
    /// A whole manifest image.
    Id(String),
    /// A region of a manifest image.
    Crop { id: String, region: PixelBox },
    /// Encoded image bytes supplied directly.
    Inline { media_type: String, data: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PromptPart {
    Text(String),
    Image(ImageRef),
}

/// What the caller knows about a request beyond its prompt parts.
///
/// Remote providers ignore this; the simulated oracle reads its inputs from it.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum CallContext {
    #[default]
    None,
    Specialist {
        image_id: String,
        sublabel_id: String,
        demos: Vec<(String, u8)>,
    },
    HumanFilter {
        image_id: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VlmRequest {
    pub parts: Vec<PromptPart>,
    pub label_name: String,
    pub temperature: f64,
    pub seed: u64,
    pub context: CallContext,
}

impl VlmRequest {
    pub fn new(parts: Vec<PromptPart>, label_name: impl Into<String>) -> Self {
        Self {
            parts,
            label_name: label_name.into(),
            temperature: 0.0,
            seed: 0,
            context: CallContext::None,
        }
    }

    pub fn with_context(mut self, context: CallContext) -> Self {
        self.context = context;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// The leading text part, which carries the task instruction.
    pub fn instruction(&self) -> Option<&str> {
        self.parts.iter().find_map(|p| match p {
            PromptPart::Text(t) => Some(t.as_str()),
            PromptPart::Image(_) => None,
        })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Text(t) => Some(t.as_str()),
            PromptPart::Image(_) => None,
        })
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.instruction().is_none() {
            return Err(ProviderError::InvalidRequest(
                "request has no text part".into(),
            ));
        }
        if !crate::data::is_machine_safe(&self.label_name) {
            return Err(ProviderError::InvalidRequest(format!(
                "label_name {:?} must match [a-z0-9_]+",
                self.label_name
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A service that turns a multimodal prompt into response text.
pub trait VlmProvider: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError>;
}

impl<P: VlmProvider + ?Sized> VlmProvider for std::sync::Arc<P> {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: VlmProvider + ?Sized> VlmProvider for &P {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// Wraps a provider and counts calls.
pub struct Counted<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P> Counted<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<P: VlmProvider> VlmProvider for Counted<P> {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Extra attempts after the first unparseable response.
    pub retries: u32,
    pub temperature_step: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            temperature_step: 0.3,
        }
    }
}

/// Final text part of every classification request.
pub fn format_directive(label_name: &str) -> String {
    format!(
        "Respond with exactly one JSON object of the form {{\"{label_name}\": 0}} or {{\"{label_name}\": 1}} and nothing else."
    )
}

/// Returns the request with the formatting directive as its last part.
pub fn with_format_directive(request: &VlmRequest) -> VlmRequest {
    let directive = format_directive(&request.label_name);
    let mut out = request.clone();
    if !matches!(out.parts.last(), Some(PromptPart::Text(t)) if *t == directive) {
        out.parts.push(PromptPart::Text(directive));
    }
    out
}

/// Runs one binary classification call.
///
/// Unparseable responses are retried up to `policy.retries` times, raising
/// the temperature by `policy.temperature_step` each time. Transport and
/// rate-limit errors are returned immediately.
pub fn vlm_classify(
    provider: &dyn VlmProvider,
    request: &VlmRequest,
    policy: &RetryPolicy,
) -> Result<u8, ProviderError> {
    request.validate()?;
    let mut attempt_req = with_format_directive(request);
    let mut last_response = String::new();
    for attempt in 0..=policy.retries {
        attempt_req.temperature = request.temperature + policy.temperature_step * f64::from(attempt);
        let text = provider.complete(&attempt_req)?;
        if let Some(v) = parse_verdict(&text, &request.label_name) {
            return Ok(v);
        }
        log::debug!(
            "unparseable {} response (attempt {}): {text:?}",
            request.label_name,
            attempt + 1
        );
        last_response = text;
    }
    Err(ProviderError::Unparseable {
        label_name: request.label_name.clone(),
        attempts: policy.retries + 1,
        last_response,
    })
}
