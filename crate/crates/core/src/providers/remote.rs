//! HTTP adapters for remote VLM and detector services.
//!
//! Wire formats:
//!
//! * VLM: `POST {"model", "temperature", "messages": [{"role": "user",
//!   "content": [{"type": "text", "text"} | {"type": "image", "data_base64",
//!   "media_type"}]}]}` answered by `{"text": ..}`.
//! * Detector: `POST {"image_base64", "query"}` answered by
//!   `{"boxes": [{"x0", "y0", "x1", "y1", "score"}]}`.
//!
//! HTTP 429 responses are retried with exponential backoff. Concurrent calls
//! are capped by a shared in-flight limiter.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    with_format_directive, ImageRef, PixelBox, PromptPart, ProviderError, RawDetection,
    RegionProvider, VlmProvider, VlmRequest,
};
use crate::data::{DatasetManifest, ImageRecord};

pub const ENV_VLM_URL: &str = "LENSFORGE_VLM_URL";
pub const ENV_VLM_KEY: &str = "LENSFORGE_VLM_KEY";
pub const ENV_DETECTOR_URL: &str = "LENSFORGE_DETECTOR_URL";

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedImage {
    pub media_type: String,
    pub data: Vec<u8>,
}

/// Resolves prompt image references to encoded bytes.
pub trait ImageSource: Send + Sync {
    fn load(&self, image: &ImageRef) -> Result<EncodedImage, ProviderError>;
}

/// Reads manifest images from local paths (`file://` prefixes allowed).
/// Crops are decoded, cut and re-encoded as PNG.
#[derive(Clone, Debug, Default)]
pub struct FileImageSource {
    uris: HashMap<String, String>,
}

impl FileImageSource {
    pub fn from_manifest(manifest: &DatasetManifest) -> Self {
        let mut source = Self::default();
        for r in &manifest.records {
            source.register(&r.id, &r.uri);
        }
        source
    }

    pub fn register(&mut self, id: &str, uri: &str) {
        self.uris.insert(id.to_owned(), uri.to_owned());
    }

    fn read(&self, id: &str) -> Result<EncodedImage, ProviderError> {
        let uri = self
            .uris
            .get(id)
            .ok_or_else(|| ProviderError::Image(format!("no uri registered for image {id:?}")))?;
        let path = uri.strip_prefix("file://").unwrap_or(uri);
        let data = std::fs::read(path)
            .map_err(|e| ProviderError::Image(format!("cannot read {path}: {e}")))?;
        Ok(EncodedImage {
            media_type: media_type_for(Path::new(path), &data),
            data,
        })
    }
}

impl ImageSource for FileImageSource {
    fn load(&self, image: &ImageRef) -> Result<EncodedImage, ProviderError> {
        match image {
            ImageRef::Id(id) => self.read(id),
            ImageRef::Crop { id, region } => crop_encoded(&self.read(id)?, *region),
            ImageRef::Inline { media_type, data } => Ok(EncodedImage {
                media_type: media_type.clone(),
                data: data.clone(),
            }),
        }
    }
}

fn media_type_for(path: &Path, data: &[u8]) -> String {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png".into(),
        Some("jpg" | "jpeg") => "image/jpeg".into(),
        Some("webp") => "image/webp".into(),
        Some("gif") => "image/gif".into(),
        _ => match image::guess_format(data) {
            Ok(format) => format.to_mime_type().into(),
            Err(_) => "application/octet-stream".into(),
        },
    }
}

pub fn crop_encoded(source: &EncodedImage, region: PixelBox) -> Result<EncodedImage, ProviderError> {
    let img = image::load_from_memory(&source.data).map_err(|e| ProviderError::Image(e.to_string()))?;
    let x1 = region.x1.min(img.width());
    let y1 = region.y1.min(img.height());
    if region.x0 >= x1 || region.y0 >= y1 {
        return Err(ProviderError::Image(format!("crop {region:?} is empty")));
    }
    let cropped = img.crop_imm(region.x0, region.y0, x1 - region.x0, y1 - region.y0);
    let mut out = Cursor::new(Vec::new());
    cropped
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ProviderError::Image(e.to_string()))?;
    Ok(EncodedImage {
        media_type: "image/png".into(),
        data: out.into_inner(),
    })
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }

    pub fn max(&self) -> usize {
        self.max
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub max_attempts: u32,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            max_attempts: 5,
        }
    }
}

/// Shared HTTP plumbing for the adapters.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    limiter: Arc<InFlightLimiter>,
    backoff: BackoffPolicy,
}

impl HttpClient {
    pub fn new(api_key: Option<String>, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            agent,
            api_key,
            limiter: Arc::new(InFlightLimiter::new(max_in_flight)),
            backoff: BackoffPolicy::default(),
        }
    }

    pub fn with_backoff(mut self, backoff: BackoffPolicy) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn limiter(&self) -> &InFlightLimiter {
        &self.limiter
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, ProviderError> {
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut req = self.agent.post(url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(body)
                .map_err(|e| ProviderError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 429 {
                let wait = self.backoff.base * 2u32.saturating_pow(attempt - 1);
                let hinted = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let wait = hinted.map_or(wait, |h| h.max(wait));
                if attempt >= self.backoff.max_attempts {
                    return Err(ProviderError::RateLimited {
                        attempts: attempt,
                        retry_after: wait,
                    });
                }
                log::warn!("rate limited by {url}; retrying in {wait:?}");
                std::thread::sleep(wait);
                continue;
            }
            if !(200..300).contains(&status) {
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(ProviderError::Http { status, body });
            }
            return resp
                .body_mut()
                .read_json::<R>()
                .map_err(|e| ProviderError::Transport(format!("bad response body: {e}")));
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WireRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<WireMessage>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WireMessage {
    pub role: String,
    pub content: Vec<WireContent>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireContent {
    Text { text: String },
    Image { data_base64: String, media_type: String },
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

pub fn encode_request(
    model: &str,
    request: &VlmRequest,
    images: &dyn ImageSource,
) -> Result<WireRequest, ProviderError> {
    let content = request
        .parts
        .iter()
        .map(|part| match part {
            PromptPart::Text(text) => Ok(WireContent::Text { text: text.clone() }),
            PromptPart::Image(image) => {
                let encoded = images.load(image)?;
                Ok(WireContent::Image {
                    data_base64: BASE64.encode(&encoded.data),
                    media_type: encoded.media_type,
                })
            }
        })
        .collect::<Result<Vec<_>, ProviderError>>()?;
    Ok(WireRequest {
        model: model.to_owned(),
        temperature: request.temperature,
        messages: vec![WireMessage {
            role: "user".into(),
            content,
        }],
    })
}

/// Classification adapter. Every outgoing request ends with the formatting
/// directive.
pub struct RemoteVlm {
    url: String,
    model: String,
    http: HttpClient,
    images: Arc<dyn ImageSource>,
}

impl RemoteVlm {
    pub fn new(url: impl Into<String>, model: impl Into<String>, http: HttpClient, images: Arc<dyn ImageSource>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            http,
            images,
        }
    }

    pub fn wire_request(&self, request: &VlmRequest) -> Result<WireRequest, ProviderError> {
        encode_request(&self.model, &with_format_directive(request), self.images.as_ref())
    }
}

impl VlmProvider for RemoteVlm {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let body = self.wire_request(request)?;
        let resp: WireResponse = self.http.post_json(&self.url, &body)?;
        Ok(resp.text)
    }
}

/// Free-text adapter for the instruction generator; sends prompts verbatim.
pub struct RemoteGenerator {
    url: String,
    model: String,
    http: HttpClient,
}

impl RemoteGenerator {
    pub fn new(url: impl Into<String>, model: impl Into<String>, http: HttpClient) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            http,
        }
    }
}

impl VlmProvider for RemoteGenerator {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let body = encode_request(&self.model, request, &FileImageSource::default())?;
        let resp: WireResponse = self.http.post_json(&self.url, &body)?;
        Ok(resp.text.trim().to_owned())
    }
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    image_base64: String,
    query: &'a str,
}

#[derive(Deserialize)]
struct DetectResponse {
    boxes: Vec<RawDetection>,
}

pub struct RemoteDetector {
    url: String,
    http: HttpClient,
    images: Arc<dyn ImageSource>,
}

impl RemoteDetector {
    pub fn new(url: impl Into<String>, http: HttpClient, images: Arc<dyn ImageSource>) -> Self {
        Self {
            url: url.into(),
            http,
            images,
        }
    }
}

impl RegionProvider for RemoteDetector {
    fn detect(&self, image: &ImageRecord, query: &str) -> Result<Vec<RawDetection>, ProviderError> {
        let encoded = self.images.load(&ImageRef::Id(image.id.clone()))?;
        let body = DetectRequest {
            image_base64: BASE64.encode(&encoded.data),
            query,
        };
        let resp: DetectResponse = self.http.post_json(&self.url, &body)?;
        Ok(resp.boxes)
    }
}

/// Endpoint settings read from the `LENSFORGE_*` environment variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RemoteEndpoints {
    pub vlm_url: Option<String>,
    pub vlm_key: Option<String>,
    pub detector_url: Option<String>,
}

impl RemoteEndpoints {
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self {
            vlm_url: var(ENV_VLM_URL),
            vlm_key: var(ENV_VLM_KEY),
            detector_url: var(ENV_DETECTOR_URL),
        }
    }
}
