//! Raster containers shared by every stage of the pipeline.
//!
//! All images are row-major. [`RealImage`] is an unconstrained real grid
//! (signed intermediate results, saliency responses), [`IntensityImage`]
//! holds finite non-negative intensities, and [`BinaryMask`] stores
//! foreground flags.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("buffer length {len} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel {index} has invalid intensity {value} (must be finite and >= 0)")]
    InvalidIntensity { index: usize, value: f64 },
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if width * height != len {
        return Err(ImageError::LengthMismatch { width, height, len });
    }
    Ok(())
}

/// Axis-aligned pixel rectangle `(x, y, w, h)`.
///
/// Coordinates are signed so that predicted regions may temporarily fall
/// outside a frame before being clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// True when the continuous point lies inside the half-open pixel area.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64
            && x < self.right() as f64
            && y >= self.y as f64
            && y < self.bottom() as f64
    }

    /// Grows the rectangle by `margin` pixels on every side.
    pub fn inflate(&self, margin: i64) -> Rect {
        Rect::new(
            self.x - margin,
            self.y - margin,
            self.w + 2 * margin,
            self.h + 2 * margin,
        )
    }

    /// Intersection with `[0, width) x [0, height)`.
    pub fn clamp_to(&self, width: usize, height: usize) -> Rect {
        let x0 = self.x.clamp(0, width as i64);
        let y0 = self.y.clamp(0, height as i64);
        let x1 = self.right().clamp(0, width as i64);
        let y1 = self.bottom().clamp(0, height as i64);
        Rect::new(x0, y0, (x1 - x0).max(0), (y1 - y0).max(0))
    }
}

/// Real-valued raster with no sign constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Edge-replicated read: out-of-range coordinates snap to the border.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealImage {
        RealImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RealImage, f: impl Fn(f64, f64) -> f64) -> RealImage {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        RealImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Copies out the part of `rect` that lies inside the image.
    pub fn crop(&self, rect: Rect) -> Option<RealImage> {
        let r = rect.clamp_to(self.width, self.height);
        if r.is_empty() {
            return None;
        }
        let (x0, y0) = (r.x as usize, r.y as usize);
        Some(RealImage::from_fn(r.w as usize, r.h as usize, |x, y| {
            self.get(x0 + x, y0 + y)
        }))
    }
}

/// Finite, non-negative intensity raster.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage(RealImage);

impl IntensityImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height, pixels.len())?;
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ImageError::InvalidIntensity { index, value });
        }
        Ok(Self(RealImage {
            width,
            height,
            data: pixels,
        }))
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self(RealImage::zeros(width, height))
    }

    pub fn from_real(img: RealImage) -> Result<Self, ImageError> {
        let RealImage {
            width,
            height,
            data,
        } = img;
        Self::new(width, height, data)
    }

    /// Replaces negative (and non-finite) values by zero.
    pub fn from_real_clamped(img: &RealImage) -> Self {
        Self(img.map(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 }))
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.0.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_real(&self) -> &RealImage {
        &self.0
    }

    pub fn into_real(self) -> RealImage {
        self.0
    }
}

impl AsRef<RealImage> for IntensityImage {
    fn as_ref(&self) -> &RealImage {
        &self.0
    }
}

impl AsRef<RealImage> for RealImage {
    fn as_ref(&self) -> &RealImage {
        self
    }
}

/// Boolean foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Foreground wherever `img >= threshold`.
    pub fn threshold(img: &RealImage, threshold: f64) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-range reads are background.
    #[inline]
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Mirror about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    /// Nearest-neighbour upscaling: every pixel becomes a `factor x factor` block.
    pub fn upscale(&self, factor: usize) -> Self {
        assert!(factor > 0);
        Self::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.get(x / factor, y / factor)
        })
    }

    /// Copies the mask into a larger canvas at offset `(dx, dy)`.
    pub fn translate_into(&self, width: usize, height: usize, dx: usize, dy: usize) -> Self {
        assert!(dx + self.width <= width && dy + self.height <= height);
        let mut out = Self::empty(width, height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(x + dx, y + dy, true);
                }
            }
        }
        out
    }

    /// 1.0 for foreground, 0.0 for background.
    pub fn to_real(&self) -> RealImage {
        RealImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_rejects_negative_and_nan() {
        assert!(matches!(
            IntensityImage::new(2, 1, vec![0.5, -0.1]),
            Err(ImageError::InvalidIntensity { index: 1, .. })
        ));
        assert!(IntensityImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(matches!(
            IntensityImage::new(2, 2, vec![0.0; 3]),
            Err(ImageError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rect_clamp_and_inflate() {
        let r = Rect::new(-3, 2, 10, 4).clamp_to(5, 5);
        assert_eq!(r, Rect::new(0, 2, 5, 3));
        assert_eq!(Rect::new(4, 4, 2, 2).inflate(1), Rect::new(3, 3, 4, 4));
        assert_eq!(Rect::new(10, 10, 4, 4).center(), (12.0, 12.0));
        assert!(Rect::new(20, 20, 5, 5).clamp_to(10, 10).is_empty());
    }

    #[test]
    fn mask_upscale_and_flip() {
        let m = BinaryMask::from_fn(3, 2, |x, y| x == 0 && y == 1);
        let up = m.upscale(2);
        assert_eq!(up.dims(), (6, 4));
        assert_eq!(up.count(), 4);
        assert!(up.get(1, 3));
        let f = m.flip_horizontal();
        assert!(f.get(2, 1));
        assert!(!f.get(0, 1));
    }
}
