//! Grayscale PGM (binary `P5`) and PNG readers and writers.
//!
//! Pixel values are mapped to `[0, 1]` by dividing by the format's maximum
//! value on load, and quantized back (`round(v * max)`, clamped) on save.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use super::SceneError;
use crate::image::{BinaryMask, IntensityImage, RealImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Pgm,
    Png,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Option<FileFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(FileFormat::Pgm),
            "png" => Some(FileFormat::Png),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SceneError {
    SceneError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a grayscale PGM or PNG file; the format is sniffed from the
/// leading bytes, not the extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<IntensityImage, SceneError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<IntensityImage, SceneError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(SceneError::Format {
            offset: Some(0),
            message: "unrecognized magic number".into(),
        })
    }
}

/// Loads an image and thresholds it at one half.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, SceneError> {
    let img = load_image(path)?;
    Ok(BinaryMask::threshold(img.as_real(), 0.5))
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn fail(&self, message: impl Into<String>) -> SceneError {
        SceneError::Format {
            offset: Some(self.pos),
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn header_number(&mut self, what: &str) -> Result<usize, SceneError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SceneError::Format {
                offset: Some(start),
                message: format!("{what} out of range"),
            })
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<IntensityImage, SceneError> {
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.fail("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.fail(format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.fail("expected single whitespace before raster")),
    }
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let n = width * height;
    let needed = n * sample_bytes;
    let raster = &bytes[cur.pos..];
    if raster.len() < needed {
        return Err(SceneError::Format {
            offset: Some(bytes.len()),
            message: format!(
                "truncated raster: need {needed} bytes, have {}",
                raster.len()
            ),
        });
    }
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(n);
    for i in 0..n {
        let v = if sample_bytes == 1 {
            raster[i] as usize
        } else {
            ((raster[2 * i] as usize) << 8) | raster[2 * i + 1] as usize
        };
        if v > maxval {
            return Err(SceneError::Format {
                offset: Some(cur.pos + i * sample_bytes),
                message: format!("sample {v} exceeds maxval {maxval}"),
            });
        }
        pixels.push(v as f64 / scale);
    }
    Ok(IntensityImage::new(width, height, pixels)?)
}

fn decode_png(bytes: &[u8]) -> Result<IntensityImage, SceneError> {
    let reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let img = reader.decode().map_err(|e| SceneError::Format {
        offset: None,
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other if other.color().bits_per_pixel() / other.color().channel_count() as u16 > 8 => other
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => other
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    Ok(IntensityImage::new(w, h, pixels)?)
}

fn quantize(v: f64, max: f64) -> u16 {
    let v = if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    };
    (v * max).round() as u16
}

pub fn encode_pgm(img: &RealImage, depth: BitDepth) -> Vec<u8> {
    let max = depth.max_value();
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), max as u32).into_bytes();
    for &v in img.data() {
        let q = quantize(v, max);
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&q.to_be_bytes()),
        }
    }
    out
}

pub fn encode_png(img: &RealImage, depth: BitDepth) -> Result<Vec<u8>, SceneError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = depth.max_value();
    let dynimg = match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v, max) as u8).collect();
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("buffer size"))
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = img.data().iter().map(|&v| quantize(v, max)).collect();
            DynamicImage::ImageLuma16(image::ImageBuffer::from_raw(w, h, raw).expect("buffer size"))
        }
    };
    let mut out = Cursor::new(Vec::new());
    dynimg
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| SceneError::Format {
            offset: None,
            message: e.to_string(),
        })?;
    Ok(out.into_inner())
}

/// Writes `img` (values expected in `[0, 1]`) choosing the format from the
/// file extension.
pub fn save_image(
    img: &RealImage,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<(), SceneError> {
    let path = path.as_ref();
    let bytes = match FileFormat::from_path(path) {
        Some(FileFormat::Pgm) => encode_pgm(img, depth),
        Some(FileFormat::Png) => encode_png(img, depth)?,
        None => {
            return Err(SceneError::Format {
                offset: None,
                message: format!("unsupported extension for {}", path.display()),
            })
        }
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), SceneError> {
    save_image(&mask.to_real(), path, BitDepth::Eight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_direct_scaling() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x80\x40";
        let img = decode_image(bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn pgm_comments_and_16_bit() {
        let mut bytes = b"P5 # comment\n1 2 # more\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixels(), &[1.0, 32768.0 / 65535.0]);
    }

    #[test]
    fn truncated_pgm_reports_offset() {
        let bytes = b"P5\n2 2\n255\n\x00\xff";
        match decode_image(bytes) {
            Err(SceneError::Format {
                offset: Some(off), ..
            }) => assert_eq!(off, bytes.len()),
            other => panic!("unexpected {other:?}"),
        }
        match decode_image(b"P5\n2") {
            Err(SceneError::Format {
                offset: Some(_), ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_image(b"GIF89a").is_err());
    }

    #[test]
    fn sample_above_maxval_rejected() {
        assert!(matches!(
            decode_image(b"P5\n1 1\n10\n\x0b"),
            Err(SceneError::Format {
                offset: Some(10),
                ..
            })
        ));
    }

    #[test]
    fn png_16_bit_saturation() {
        let img = RealImage::filled(3, 2, 1.0);
        let bytes = encode_png(&img, BitDepth::Sixteen).unwrap();
        let back = decode_image(&bytes).unwrap();
        assert!(back.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn truncated_png_is_format_error() {
        let bytes = encode_png(&RealImage::filled(4, 4, 0.5), BitDepth::Eight).unwrap();
        assert!(matches!(
            decode_image(&bytes[..bytes.len() / 2]),
            Err(SceneError::Format { .. })
        ));
    }

    #[test]
    fn save_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = RealImage::new(2, 1, vec![0.25, 0.75]).unwrap();
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_image(&img, &p, BitDepth::Sixteen).unwrap();
            let back = load_image(&p).unwrap();
            assert!((back.pixels()[0] - 0.25).abs() < 1e-4);
        }
        assert!(save_image(&img, dir.path().join("a.bmp"), BitDepth::Eight).is_err());
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(SceneError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn eight_bit_round_trip_is_bit_exact(
            w in 1usize..12, h in 1usize..12, seed in any::<u64>(), png in any::<bool>()
        ) {
            let raw: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 56) as u8).collect();
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend_from_slice(&raw);
            let first = decode_image(&bytes).unwrap();
            let encoded = if png {
                encode_png(first.as_real(), BitDepth::Eight).unwrap()
            } else {
                encode_pgm(first.as_real(), BitDepth::Eight)
            };
            let second = decode_image(&encoded).unwrap();
            prop_assert_eq!(first.pixels(), second.pixels());
        }

        #[test]
        fn sixteen_bit_round_trip(vals in proptest::collection::vec(0u16..=65535, 6), png in any::<bool>()) {
            let img = RealImage::new(3, 2, vals.iter().map(|&v| v as f64 / 65535.0).collect()).unwrap();
            let encoded = if png { encode_png(&img, BitDepth::Sixteen).unwrap() } else { encode_pgm(&img, BitDepth::Sixteen) };
            let back = decode_image(&encoded).unwrap();
            prop_assert_eq!(back.pixels(), img.data());
        }
    }
}
