//! Same-size 2D convolution with edge replication.
//!
//! `out(p) = sum_q mask(q) * img(clamp(p - q))` with `q` ranging over the
//! mask offsets about its centre. The FFT path pads the image by the mask
//! radius with replicated borders, which makes the circular convolution of
//! the padded grid equal to the linear one on every output pixel.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::SaliencyError;
use crate::image::RealImage;

/// Masks with at most this many taps go through the direct path.
const DIRECT_TAPS: usize = 81;

fn check(img: &RealImage, mask: &RealImage) -> Result<(usize, usize), SaliencyError> {
    let (mw, mh) = mask.dims();
    if mw % 2 == 0 || mh % 2 == 0 {
        return Err(SaliencyError::InvalidParam(format!(
            "mask sides must be odd, got {mw}x{mh}"
        )));
    }
    let (w, h) = img.dims();
    if mw > w || mh > h {
        return Err(SaliencyError::MaskTooLarge {
            mask_width: mw,
            mask_height: mh,
            width: w,
            height: h,
        });
    }
    Ok((mw / 2, mh / 2))
}

/// Picks the direct path for small masks and the FFT path otherwise.
pub fn convolve(img: &RealImage, mask: &RealImage) -> Result<RealImage, SaliencyError> {
    if mask.data().len() <= DIRECT_TAPS {
        convolve_direct(img, mask)
    } else {
        convolve_fft(img, mask)
    }
}

/// Nested-loop evaluation of the definition.
pub fn convolve_direct(img: &RealImage, mask: &RealImage) -> Result<RealImage, SaliencyError> {
    let (rx, ry) = check(img, mask)?;
    let (w, h) = img.dims();
    let (rx, ry) = (rx as i64, ry as i64);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for qy in -ry..=ry {
                for qx in -rx..=rx {
                    let m = mask.get((qx + rx) as usize, (qy + ry) as usize);
                    if m != 0.0 {
                        acc += m * img.get_clamped(x as i64 - qx, y as i64 - qy);
                    }
                }
            }
            *slot = acc;
        }
    });
    Ok(RealImage::new(w, h, out).expect("dimensions preserved"))
}

/// Smallest integer `>= n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Plan2d {
    nx: usize,
    ny: usize,
    row: Arc<dyn Fft<f64>>,
    col: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(nx: usize, ny: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
        } else {
            (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
        };
        Self { nx, ny, row, col }
    }

    /// In-place transform of a row-major `nx * ny` buffer.
    fn run(&self, buf: &mut [Complex<f64>]) {
        let (nx, ny) = (self.nx, self.ny);
        buf.par_chunks_mut(nx).for_each(|r| self.row.process(r));
        let mut t = transpose(buf, nx, ny);
        t.par_chunks_mut(ny).for_each(|c| self.col.process(c));
        buf.copy_from_slice(&transpose(&t, ny, nx));
    }
}

fn transpose(buf: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = buf[y * w + x];
        }
    }
    out
}

/// Transform-domain evaluation; agrees with [`convolve_direct`] to rounding.
pub fn convolve_fft(img: &RealImage, mask: &RealImage) -> Result<RealImage, SaliencyError> {
    let (rx, ry) = check(img, mask)?;
    let (w, h) = img.dims();
    let nx = smooth_size(w + 2 * rx);
    let ny = smooth_size(h + 2 * ry);
    let zero = Complex::new(0.0, 0.0);

    let mut a = vec![zero; nx * ny];
    for j in 0..h + 2 * ry {
        for i in 0..w + 2 * rx {
            let v = img.get_clamped(i as i64 - rx as i64, j as i64 - ry as i64);
            a[j * nx + i] = Complex::new(v, 0.0);
        }
    }
    // Mask centred on the origin with negative offsets wrapped around.
    let mut b = vec![zero; nx * ny];
    let (mw, mh) = mask.dims();
    for my in 0..mh {
        for mx in 0..mw {
            let qx = (mx as i64 - rx as i64).rem_euclid(nx as i64) as usize;
            let qy = (my as i64 - ry as i64).rem_euclid(ny as i64) as usize;
            b[qy * nx + qx] = Complex::new(mask.get(mx, my), 0.0);
        }
    }

    let forward = Plan2d::new(nx, ny, false);
    forward.run(&mut a);
    forward.run(&mut b);
    a.par_iter_mut()
        .zip(b.par_iter())
        .for_each(|(x, y)| *x *= *y);
    Plan2d::new(nx, ny, true).run(&mut a);

    let scale = 1.0 / (nx * ny) as f64;
    let out = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| a[(y + ry) * nx + x + rx].re * scale)
        .collect();
    Ok(RealImage::new(w, h, out).expect("dimensions preserved"))
}
