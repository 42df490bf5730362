//! Centre-surround saliency from gamma-kernel banks.
//!
//! A bank alternates a centre-focused kernel with ring-shaped neighbourhood
//! kernels. Convolving an illumination-corrected frame with the composite
//! responds positively where a blob is brighter than its surround. The
//! response is clamped at zero and scaled to a peak of one to give the
//! saliency map, which is binarized at a multiple of its mean and split into
//! connected components.

mod boxes;
mod convolve;
mod kernel;

use thiserror::Error;

pub use boxes::{extract_boxes, label_components, largest_component, ScoredBox};
pub use convolve::{convolve, convolve_direct, convolve_fft};
pub use kernel::{
    auto_radius, format_bank_params, gamma_value, parse_bank_params, peak_radius, GammaKernel,
    GammaKernelBank, DEFAULT_BANK, TAIL_FRACTION,
};

use crate::image::{BinaryMask, RealImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaliencyError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{mask_width}x{mask_height} mask does not fit a {width}x{height} image")]
    MaskTooLarge {
        mask_width: usize,
        mask_height: usize,
        width: usize,
        height: usize,
    },
}

/// Raw composite response, before clamping and normalization.
pub fn saliency_response(
    img: &RealImage,
    bank: &GammaKernelBank,
) -> Result<RealImage, SaliencyError> {
    convolve(img, bank.composite())
}

/// Splits a response into the normalized map and its pre-normalization peak.
fn normalize(response: &RealImage) -> (RealImage, f64) {
    let peak = response.max().max(0.0);
    let map = if peak > 0.0 {
        response.map(|v| v.max(0.0) / peak)
    } else {
        response.map(|_| 0.0)
    };
    (map, peak)
}

/// Composite response with negatives clamped to zero, scaled so the maximum
/// is 1 (left at zero if nothing is positive).
pub fn saliency_map(img: &RealImage, bank: &GammaKernelBank) -> Result<RealImage, SaliencyError> {
    Ok(normalize(&saliency_response(img, bank)?).0)
}

/// `map >= threshold` per pixel.
pub fn binarize(map: &RealImage, threshold: f64) -> BinaryMask {
    BinaryMask::threshold(map, threshold)
}

/// `alpha * mean(map)`.
pub fn adaptive_threshold(map: &RealImage, alpha: f64) -> f64 {
    alpha * map.mean()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyResult {
    pub map: RealImage,
    pub mask: BinaryMask,
    pub boxes: Vec<ScoredBox>,
    /// Largest positive composite response; the factor the map was divided by.
    pub peak_response: f64,
    pub threshold: f64,
}

impl SaliencyResult {
    /// A box score in composite-response units rather than relative to the
    /// frame's own peak, so frames can be compared with a fixed trigger.
    pub fn raw_score(&self, b: &ScoredBox) -> f64 {
        b.score * self.peak_response
    }
}

/// Map, adaptive binarization at `alpha * mean`, and boxes of at least
/// `min_area` pixels.
pub fn detect(
    img: &RealImage,
    bank: &GammaKernelBank,
    alpha: f64,
    min_area: usize,
) -> Result<SaliencyResult, SaliencyError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(SaliencyError::InvalidParam(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let (map, peak_response) = normalize(&saliency_response(img, bank)?);
    let threshold = adaptive_threshold(&map, alpha);
    // A blank map has nothing to detect even at threshold 0.
    let mask = if peak_response > 0.0 {
        binarize(&map, threshold)
    } else {
        BinaryMask::empty(map.width(), map.height())
    };
    let boxes = extract_boxes(&mask, &map, min_area);
    Ok(SaliencyResult {
        map,
        mask,
        boxes,
        peak_response,
        threshold,
    })
}
