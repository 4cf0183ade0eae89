use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::data::ImageRecord;

/// Axis-aligned box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Bbox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn clamp_to(&self, width: u32, height: u32) -> Self {
        let (w, h) = (f64::from(width), f64::from(height));
        Self {
            x0: self.x0.clamp(0.0, w),
            y0: self.y0.clamp(0.0, h),
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1
    }
}

/// Unfiltered detector output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    #[serde(flatten)]
    pub bbox: Bbox,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub bbox: Bbox,
    pub score: f64,
    pub query: String,
}

/// An open-vocabulary object detector.
pub trait RegionProvider: Send + Sync {
    fn detect(&self, image: &ImageRecord, query: &str) -> Result<Vec<RawDetection>, ProviderError>;
}

impl<P: RegionProvider + ?Sized> RegionProvider for std::sync::Arc<P> {
    fn detect(&self, image: &ImageRecord, query: &str) -> Result<Vec<RawDetection>, ProviderError> {
        (**self).detect(image, query)
    }
}

/// Queries the detector and returns clamped proposals scoring at least
/// `score_threshold`, best first, at most `max_regions` of them.
///
/// Ties are ordered by `x0` then `y0` ascending, so the result does not
/// depend on the order the detector reports boxes in.
pub fn propose_regions(
    provider: &dyn RegionProvider,
    image: &ImageRecord,
    query: &str,
    score_threshold: f64,
    max_regions: usize,
) -> Result<Vec<RegionProposal>, ProviderError> {
    if query.trim().is_empty() {
        return Err(ProviderError::InvalidRequest("empty detection query".into()));
    }
    let mut kept: Vec<RegionProposal> = provider
        .detect(image, query)?
        .into_iter()
        .filter(|d| d.score.is_finite() && d.score >= score_threshold)
        .filter_map(|d| {
            let bbox = d.bbox.clamp_to(image.width, image.height);
            bbox.is_valid().then(|| RegionProposal {
                bbox,
                score: d.score.clamp(0.0, 1.0),
                query: query.to_owned(),
            })
        })
        .collect();
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
            .then(a.bbox.y0.total_cmp(&b.bbox.y0))
            .then(a.bbox.x1.total_cmp(&b.bbox.x1))
            .then(a.bbox.y1.total_cmp(&b.bbox.y1))
    });
    kept.truncate(max_regions);
    Ok(kept)
}
