//! Hu's seven moment invariants of binary silhouettes.
//!
//! Moments integrate over each foreground pixel's unit square rather than
//! sampling pixel centres, so a mask enlarged by pixel replication has
//! exactly scaled moments.

use super::DtgError;
use crate::image::BinaryMask;

/// Moment invariants after the signed-log map
/// `sign(h) * ln(1 + |h| * 1e7)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuState(pub [f64; 7]);

impl HuState {
    pub fn values(&self) -> &[f64; 7] {
        &self.0
    }

    pub fn distance_sq(&self, other: &HuState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &HuState) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

pub const SIGNED_LOG_SCALE: f64 = 1e7;

pub fn signed_log(h: f64) -> f64 {
    h.signum() * (h.abs() * SIGNED_LOG_SCALE).ln_1p()
}

/// `integral of t^p` over `[a - 1/2, a + 1/2]`.
fn unit_moment(a: f64, p: usize) -> f64 {
    match p {
        0 => 1.0,
        1 => a,
        2 => a * a + 1.0 / 12.0,
        3 => a * a * a + a / 4.0,
        _ => unreachable!("moments above third order are not needed"),
    }
}

/// The raw invariants before the signed-log map.
pub fn hu_invariants(mask: &BinaryMask) -> Result<[f64; 7], DtgError> {
    let w = mask.width();
    let fg: Vec<(f64, f64)> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| ((i % w) as f64, (i / w) as f64))
        .collect();
    if fg.is_empty() {
        return Err(DtgError::EmptyMask);
    }
    let m00 = fg.len() as f64;
    let (cx, cy) = fg.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (cx / m00, cy / m00);
    let mut mu = [[0.0f64; 4]; 4];
    for &(x, y) in &fg {
        let (a, b) = (x - cx, y - cy);
        let ia = [1.0, unit_moment(a, 1), unit_moment(a, 2), unit_moment(a, 3)];
        let ib = [1.0, unit_moment(b, 1), unit_moment(b, 2), unit_moment(b, 3)];
        for p in 0..4 {
            for q in 0..4 - p {
                mu[p][q] += ia[p] * ib[q];
            }
        }
    }
    let eta = |p: usize, q: usize| mu[p][q] / m00.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));
    let (s1, s2) = (n30 + n12, n21 + n03);
    let (d1, d2) = (n30 - 3.0 * n12, 3.0 * n21 - n03);
    Ok([
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        d1 * d1 + d2 * d2,
        s1 * s1 + s2 * s2,
        d1 * s1 * (s1 * s1 - 3.0 * s2 * s2) + d2 * s2 * (3.0 * s1 * s1 - s2 * s2),
        (n20 - n02) * (s1 * s1 - s2 * s2) + 4.0 * n11 * s1 * s2,
        d2 * s1 * (s1 * s1 - 3.0 * s2 * s2) - d1 * s2 * (3.0 * s1 * s1 - s2 * s2),
    ])
}

pub fn hu_moments(mask: &BinaryMask) -> Result<HuState, DtgError> {
    Ok(HuState(hu_invariants(mask)?.map(signed_log)))
}
