//! Grayscale morphology and illumination correction.
//!
//! The background estimate is the morphological opening of the frame with a
//! structuring element larger than any object of interest; subtracting it
//! flattens the backscatter pedestal while keeping small bright objects.
//! Borders use edge replication so flat regions are fixed points.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::image::{IntensityImage, RealImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("structuring element of side {side} does not fit a {width}x{height} image")]
    SeTooLarge {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid structuring element: {0}")]
    InvalidStructuringElement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeShape {
    /// All offsets with `dx^2 + dy^2 <= r^2`.
    Disk(usize),
    /// Odd side length.
    Square(usize),
}

/// Flat, centre-symmetric structuring element stored as one horizontal
/// half-width per row offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    shape: SeShape,
    radius: usize,
    half_widths: Vec<usize>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        let r = radius as i64;
        let half_widths = (-r..=r)
            .map(|dy| ((r * r - dy * dy) as f64).sqrt().floor() as usize)
            .collect();
        Self {
            shape: SeShape::Disk(radius),
            radius,
            half_widths,
        }
    }

    pub fn square(side: usize) -> Result<Self, PreprocessError> {
        if side == 0 || side % 2 == 0 {
            return Err(PreprocessError::InvalidStructuringElement(format!(
                "square side must be odd and positive, got {side}"
            )));
        }
        let radius = side / 2;
        Ok(Self {
            shape: SeShape::Square(side),
            radius,
            half_widths: vec![radius; side],
        })
    }

    /// Disk with radius `max(width, height) / 8`.
    pub fn default_for(width: usize, height: usize) -> Self {
        Self::disk(width.max(height) / 8)
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Row-major boolean footprint of size `side x side`.
    pub fn mask(&self) -> Vec<bool> {
        let side = self.side();
        let r = self.radius as i64;
        let mut out = Vec::with_capacity(side * side);
        for &hw in &self.half_widths {
            for dx in -r..=r {
                out.push(dx.unsigned_abs() as usize <= hw);
            }
        }
        out
    }

    /// `(dx, dy)` offsets covered by the element.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let r = self.radius as i64;
        let mut out = Vec::new();
        for (i, &hw) in self.half_widths.iter().enumerate() {
            let dy = i as i64 - r;
            for dx in -(hw as i64)..=hw as i64 {
                out.push((dx, dy));
            }
        }
        out
    }

    fn check_fits(&self, img: &RealImage) -> Result<(), PreprocessError> {
        let side = self.side();
        if side > img.width() || side > img.height() {
            return Err(PreprocessError::SeTooLarge {
                side,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for StructuringElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            SeShape::Disk(r) => write!(f, "disk:{r}"),
            SeShape::Square(s) => write!(f, "square:{s}"),
        }
    }
}

impl FromStr for StructuringElement {
    type Err = PreprocessError;

    /// Parses `disk:<radius>` or `square:<odd side>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            PreprocessError::InvalidStructuringElement(format!(
                "expected disk:<r> or square:<side>, got `{s}`"
            ))
        };
        let (kind, size) = s.split_once(':').ok_or_else(bad)?;
        let size: usize = size.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "disk" => Ok(Self::disk(size)),
            "square" => Self::square(size),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    #[inline]
    fn keeps(self, incumbent: f64, candidate: f64) -> bool {
        match self {
            Extremum::Min => incumbent <= candidate,
            Extremum::Max => incumbent >= candidate,
        }
    }

    #[inline]
    fn pick(self, a: f64, b: f64) -> f64 {
        if self.keeps(a, b) {
            a
        } else {
            b
        }
    }
}

/// Sliding extremum over `[x - hw, x + hw]` clipped to the row. For min and
/// max, clipping is the same as edge replication.
fn sliding_extremum(row: &[f64], hw: usize, op: Extremum, out: &mut [f64]) {
    let n = row.len();
    let mut deque: std::collections::VecDeque<usize> =
        std::collections::VecDeque::with_capacity(2 * hw + 1);
    let mut next = 0usize;
    for (x, slot) in out.iter_mut().enumerate() {
        let hi = (x + hw).min(n - 1);
        while next <= hi {
            while let Some(&back) = deque.back() {
                if op.keeps(row[next], row[back]) {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = x.saturating_sub(hw);
        while let Some(&front) = deque.front() {
            if front < lo {
                deque.pop_front();
            } else {
                break;
            }
        }
        *slot = row[*deque.front().expect("window is never empty")];
    }
}

fn morph(img: &RealImage, se: &StructuringElement, op: Extremum) -> RealImage {
    let (w, h) = img.dims();
    let mut distinct: Vec<usize> = se.half_widths.clone();
    distinct.sort_unstable();
    distinct.dedup();
    // Horizontal pass for every distinct half-width.
    let passes: Vec<Vec<f64>> = distinct
        .iter()
        .map(|&hw| {
            let mut buf = vec![0.0; w * h];
            for y in 0..h {
                sliding_extremum(img.row(y), hw, op, &mut buf[y * w..(y + 1) * w]);
            }
            buf
        })
        .collect();
    let pass_of: Vec<&Vec<f64>> = se
        .half_widths
        .iter()
        .map(|hw| &passes[distinct.binary_search(hw).expect("present")])
        .collect();
    let r = se.radius as i64;
    let mut out = RealImage::zeros(w, h);
    let data = out.data_mut();
    for y in 0..h {
        let dst = &mut data[y * w..(y + 1) * w];
        for (i, pass) in pass_of.iter().enumerate() {
            let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
            let src = &pass[sy * w..(sy + 1) * w];
            if i == 0 {
                dst.copy_from_slice(src);
            } else {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = op.pick(*d, s);
                }
            }
        }
    }
    out
}

/// Minimum over the structuring-element neighbourhood, on a signed image.
pub fn erode_signed(
    img: &RealImage,
    se: &StructuringElement,
) -> Result<RealImage, PreprocessError> {
    se.check_fits(img)?;
    Ok(morph(img, se, Extremum::Min))
}

/// Maximum over the structuring-element neighbourhood, on a signed image.
pub fn dilate_signed(
    img: &RealImage,
    se: &StructuringElement,
) -> Result<RealImage, PreprocessError> {
    se.check_fits(img)?;
    Ok(morph(img, se, Extremum::Max))
}

pub fn open_signed(img: &RealImage, se: &StructuringElement) -> Result<RealImage, PreprocessError> {
    se.check_fits(img)?;
    Ok(morph(&morph(img, se, Extremum::Min), se, Extremum::Max))
}

pub fn erode(
    img: &IntensityImage,
    se: &StructuringElement,
) -> Result<IntensityImage, PreprocessError> {
    erode_signed(img.as_real(), se)
        .map(|r| IntensityImage::from_real(r).expect("min of non-negative values"))
}

pub fn dilate(
    img: &IntensityImage,
    se: &StructuringElement,
) -> Result<IntensityImage, PreprocessError> {
    dilate_signed(img.as_real(), se)
        .map(|r| IntensityImage::from_real(r).expect("max of non-negative values"))
}

/// Morphological opening (erosion then dilation); the background estimate.
pub fn open(
    img: &IntensityImage,
    se: &StructuringElement,
) -> Result<IntensityImage, PreprocessError> {
    open_signed(img.as_real(), se)
        .map(|r| IntensityImage::from_real(r).expect("opening of non-negative values"))
}

/// Frame after background subtraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedImage {
    background: IntensityImage,
    signed: RealImage,
}

impl EnhancedImage {
    /// The background estimate that was subtracted.
    pub fn background(&self) -> &IntensityImage {
        &self.background
    }

    /// `I - B`, unclamped. This is what detection consumes.
    pub fn signed(&self) -> &RealImage {
        &self.signed
    }

    /// `max(I - B, 0)` for display and storage.
    pub fn clamped(&self) -> IntensityImage {
        IntensityImage::from_real_clamped(&self.signed)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.signed.dims()
    }
}

pub fn illumination_correct(
    img: &IntensityImage,
    se: &StructuringElement,
) -> Result<EnhancedImage, PreprocessError> {
    let background = open(img, se)?;
    let signed = img.as_real().zip_map(background.as_real(), |i, b| i - b);
    Ok(EnhancedImage { background, signed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RealImage {
        RealImage::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
    }

    /// Nested-loop window extremum with explicit edge replication.
    fn brute_force(img: &RealImage, se: &StructuringElement, max: bool) -> RealImage {
        let offsets = se.offsets();
        RealImage::from_fn(img.width(), img.height(), |x, y| {
            let mut best = if max {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            for &(dx, dy) in &offsets {
                let v = img.get_clamped(x as i64 + dx, y as i64 + dy);
                best = if max { best.max(v) } else { best.min(v) };
            }
            best
        })
    }

    #[test]
    fn disk_footprint() {
        let se = StructuringElement::disk(1);
        assert_eq!(
            se.mask(),
            vec![false, true, false, true, true, true, false, true, false]
        );
        let d2 = StructuringElement::disk(2);
        assert_eq!(d2.offsets().len(), 13);
        // Symmetric about the centre.
        let m = d2.mask();
        assert!(m.iter().zip(m.iter().rev()).all(|(a, b)| a == b));
    }

    #[test]
    fn parse_structuring_elements() {
        assert_eq!(
            "disk:32".parse::<StructuringElement>().unwrap().radius(),
            32
        );
        assert_eq!("square:5".parse::<StructuringElement>().unwrap().side(), 5);
        assert!("square:4".parse::<StructuringElement>().is_err());
        assert!("ring:3".parse::<StructuringElement>().is_err());
        assert_eq!(StructuringElement::disk(3).to_string(), "disk:3");
        assert_eq!(StructuringElement::default_for(256, 128).radius(), 32);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = IntensityImage::new(9, 7, vec![0.4; 63]).unwrap();
        let se = StructuringElement::disk(2);
        assert_eq!(erode(&img, &se).unwrap(), img);
        assert_eq!(dilate(&img, &se).unwrap(), img);
        assert_eq!(open(&img, &se).unwrap(), img);
        let e = illumination_correct(&img, &se).unwrap();
        assert!(e.signed().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_erased_by_erosion_and_spread_by_dilation() {
        let mut px = vec![0.0; 49];
        px[3 * 7 + 3] = 1.0;
        let img = IntensityImage::new(7, 7, px).unwrap();
        let se = StructuringElement::disk(1);
        assert!(erode(&img, &se).unwrap().pixels().iter().all(|&v| v == 0.0));
        let d = dilate(&img, &se).unwrap();
        assert_eq!(d.pixels().iter().filter(|&&v| v == 1.0).count(), 5);
        assert_eq!(d.get(3, 2), 1.0);
        assert_eq!(d.get(2, 2), 0.0);
    }

    #[test]
    fn matches_brute_force_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 8, 8);
        for se in [
            StructuringElement::square(3).unwrap(),
            StructuringElement::disk(2),
            StructuringElement::disk(3),
        ] {
            assert_eq!(
                erode_signed(&img, &se).unwrap(),
                brute_force(&img, &se, false)
            );
            assert_eq!(
                dilate_signed(&img, &se).unwrap(),
                brute_force(&img, &se, true)
            );
        }
        let wide = random_image(&mut rng, 23, 11);
        let se = StructuringElement::disk(5);
        assert_eq!(
            erode_signed(&wide, &se).unwrap(),
            brute_force(&wide, &se, false)
        );
    }

    #[test]
    fn too_large_element_rejected() {
        let img = IntensityImage::zeros(6, 10);
        assert_eq!(
            erode(&img, &StructuringElement::disk(3)),
            Err(PreprocessError::SeTooLarge {
                side: 7,
                width: 6,
                height: 10
            })
        );
        assert!(open(&img, &StructuringElement::square(5).unwrap()).is_ok());
    }

    /// Quadratic pedestal on a 96x96 frame.
    fn pedestal(x: usize, y: usize) -> f64 {
        let (u, v) = (x as f64 / 95.0, y as f64 / 95.0);
        0.2 + 0.3 * u + 0.2 * v - 0.1 * u * u
    }

    #[test]
    fn opening_removes_small_object_and_keeps_gradient() {
        let se = StructuringElement::disk(8);
        let gradient = IntensityImage::from_real(RealImage::from_fn(96, 96, pedestal)).unwrap();
        let with_object = IntensityImage::from_real(RealImage::from_fn(96, 96, |x, y| {
            let inside = (x as f64 - 50.0).powi(2) + (y as f64 - 40.0).powi(2) <= 25.0;
            pedestal(x, y) + if inside { 0.5 } else { 0.0 }
        }))
        .unwrap();
        // Oracle: how far opening moves the object-free gradient by itself.
        let base_dev = open(&gradient, &se)
            .unwrap()
            .pixels()
            .iter()
            .zip(gradient.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dev = open(&with_object, &se)
            .unwrap()
            .pixels()
            .iter()
            .zip(gradient.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(base_dev < 0.035, "{base_dev}");
        assert!(
            dev <= base_dev + 1e-12,
            "object leaked into background: {dev} vs {base_dev}"
        );
    }

    #[test]
    fn correction_of_smooth_gradient_is_small() {
        let se = StructuringElement::disk(8);
        let gradient = IntensityImage::from_real(RealImage::from_fn(96, 96, pedestal)).unwrap();
        let e = illumination_correct(&gradient, &se).unwrap();
        // Residual of a linear ramp is zero away from borders; the quadratic
        // term contributes at most |cxx| * (2r / 95)^2.
        let bound = 0.1 * (16.0f64 / 95.0).powi(2) + 0.3 * 8.0 / 95.0;
        let max = e.signed().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound, "{max} > {bound}");
        assert_eq!(e.background().dims(), (96, 96));
        assert!(e.clamped().pixels().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn correction_increases_blob_contrast() {
        let se = StructuringElement::disk(10);
        // Blob sits in the dim corner while backscatter brightens the far side.
        let inside = |x: usize, y: usize| {
            (x as f64 - 24.0).powi(2) / 64.0 + (y as f64 - 28.0).powi(2) / 36.0 <= 1.0
        };
        let img = IntensityImage::from_real(RealImage::from_fn(96, 96, |x, y| {
            pedestal(x, y) * 1.5 + if inside(x, y) { 0.15 } else { 0.0 }
        }))
        .unwrap();
        let contrast = |data: &[f64]| {
            let (mut si, mut ni, mut so, mut no) = (0.0, 0.0, 0.0, 0.0);
            for y in 0..96 {
                for x in 0..96 {
                    if inside(x, y) {
                        si += data[y * 96 + x];
                        ni += 1.0;
                    } else {
                        so += data[y * 96 + x];
                        no += 1.0;
                    }
                }
            }
            (si / ni - so / no, si / ni / (so / no))
        };
        let (diff_before, ratio_before) = contrast(img.pixels());
        let corrected = illumination_correct(&img, &se).unwrap();
        let (diff_after, _) = contrast(corrected.signed().data());
        let (_, ratio_after) = contrast(corrected.clamped().pixels());
        assert!(diff_after > diff_before, "{diff_after} <= {diff_before}");
        assert!(
            ratio_after > 2.0 * ratio_before,
            "{ratio_after} vs {ratio_before}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn opening_laws(seed in any::<u64>(), w in 8usize..24, h in 8usize..24, r in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = IntensityImage::from_real(random_image(&mut rng, w, h)).unwrap();
            let se = StructuringElement::disk(r);
            let once = open(&img, &se).unwrap();
            let twice = open(&once, &se).unwrap();
            prop_assert_eq!(&once, &twice);
            for (o, i) in once.pixels().iter().zip(img.pixels()) {
                prop_assert!(o <= i);
            }
        }

        #[test]
        fn erosion_dilation_duality(seed in any::<u64>(), side in prop::sample::select(vec![1usize, 3, 5])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = RealImage::from_fn(12, 9, |_, _| rng.random_range(-1.0..1.0));
            let se = StructuringElement::square(side).unwrap();
            let d = dilate_signed(&img, &se).unwrap();
            let e = erode_signed(&img.map(|v| -v), &se).unwrap().map(|v| -v);
            prop_assert_eq!(d, e);
        }
    }
}
