use crate::data::ImageRecord;
use crate::providers::{
    vlm_classify, CallContext, ImageRef, PromptPart, ProviderError, RetryPolicy, VlmProvider,
    VlmRequest,
};

pub const HUMAN_FILTER_PROMPT: &str = "Look at this image and determine if it contains any of these body parts: a human, any human body part, a human hand, a human face, a human foot. Return 1 if at least one of these parts is clearly visible and recognizable, otherwise return 0. You only need ONE of the specified parts to be present to return 1.";

pub const HUMAN_FILTER_LABEL: &str = "contains_human";

/// Asks the VLM whether `record` shows a human or human body part.
/// Returns 1 when the record should be kept.
pub fn filter_contains_human(
    provider: &dyn VlmProvider,
    record: &ImageRecord,
    retry: &RetryPolicy,
) -> Result<u8, ProviderError> {
    let request = VlmRequest::new(
        vec![
            PromptPart::Text(HUMAN_FILTER_PROMPT.to_owned()),
            PromptPart::Image(ImageRef::Id(record.id.clone())),
        ],
        HUMAN_FILTER_LABEL,
    )
    .with_context(CallContext::HumanFilter {
        image_id: record.id.clone(),
    });
    vlm_classify(provider, &request, retry)
}
