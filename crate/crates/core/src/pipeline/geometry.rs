use super::PipelineError;
use crate::providers::{Bbox, PixelBox};

const SNAP: f64 = 1e-9;

fn floor_snapped(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v.floor()
    }
}

fn ceil_snapped(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v.ceil()
    }
}

/// Grows `bbox` by `padding` times its width on the left and right and times
/// its height on the top and bottom, clamps to the image and rounds outward.
pub fn crop_with_padding(width: u32, height: u32, bbox: &Bbox, padding: f64) -> Result<PixelBox, PipelineError> {
    let (w, h) = (bbox.width(), bbox.height());
    if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
        return Err(PipelineError::DegenerateBox(*bbox));
    }
    if !padding.is_finite() || padding < 0.0 {
        return Err(PipelineError::InvalidSpec(format!("padding fraction {padding} must be finite and >= 0")));
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    let x0 = floor_snapped(bbox.x0 - padding * w).clamp(0.0, wf);
    let y0 = floor_snapped(bbox.y0 - padding * h).clamp(0.0, hf);
    let x1 = ceil_snapped(bbox.x1 + padding * w).clamp(0.0, wf);
    let y1 = ceil_snapped(bbox.y1 + padding * h).clamp(0.0, hf);
    if x0 >= x1 || y0 >= y1 {
        return Err(PipelineError::DegenerateBox(*bbox));
    }
    Ok(PixelBox {
        x0: x0 as u32,
        y0: y0 as u32,
        x1: x1 as u32,
        y1: y1 as u32,
    })
}
