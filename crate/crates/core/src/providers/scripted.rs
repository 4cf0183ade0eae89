//! Scripted providers for tests and fault injection.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ProviderError, RawDetection, RegionProvider, VlmProvider, VlmRequest};
use crate::data::ImageRecord;

/// Replays canned responses in order; the last one repeats once the script
/// runs out. Every request is recorded.
pub struct ScriptedVlm {
    script: Mutex<VecDeque<String>>,
    last: Mutex<Option<String>>,
    seen: Mutex<Vec<VlmRequest>>,
}

impl ScriptedVlm {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(responses.into_iter().map(Into::into).collect()),
            last: Mutex::new(None),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn seen(&self) -> Vec<VlmRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl VlmProvider for ScriptedVlm {
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(request.clone());
        let mut last = self.last.lock().unwrap();
        if let Some(next) = self.script.lock().unwrap().pop_front() {
            *last = Some(next);
        }
        last.clone()
            .ok_or_else(|| ProviderError::Transport("script is empty".into()))
    }
}

/// Provider backed by a closure.
pub struct FnVlm<F>(pub F);

impl<F> VlmProvider for FnVlm<F>
where
    F: Fn(&VlmRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        (self.0)(request)
    }
}

/// Detector returning the same boxes for every image and query.
pub struct StubDetector {
    boxes: Vec<RawDetection>,
}

impl StubDetector {
    pub fn new(boxes: Vec<RawDetection>) -> Self {
        Self { boxes }
    }
}

impl RegionProvider for StubDetector {
    fn detect(&self, _image: &ImageRecord, _query: &str) -> Result<Vec<RawDetection>, ProviderError> {
        Ok(self.boxes.clone())
    }
}

/// Detector backed by a closure.
pub struct FnDetector<F>(pub F);

impl<F> RegionProvider for FnDetector<F>
where
    F: Fn(&ImageRecord, &str) -> Result<Vec<RawDetection>, ProviderError> + Send + Sync,
{
    fn detect(&self, image: &ImageRecord, query: &str) -> Result<Vec<RawDetection>, ProviderError> {
        (self.0)(image, query)
    }
}
