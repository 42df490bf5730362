//! Log-polar shape-context histograms and the cosine distance between them.

use std::f64::consts::TAU;

use super::PointSet;

/// Innermost and outermost radial bin edges, as multiples of the mean
/// pairwise distance.
pub const R_INNER: f64 = 0.125;
pub const R_OUTER: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeContext {
    r_bins: usize,
    theta_bins: usize,
    /// `points x r_bins x theta_bins`, row-major.
    counts: Vec<f64>,
}

impl ShapeContext {
    pub fn r_bins(&self) -> usize {
        self.r_bins
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn len(&self) -> usize {
        self.counts.len() / (self.r_bins * self.theta_bins)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Histogram of point `i`, radial bins major.
    pub fn histogram(&self, i: usize) -> &[f64] {
        let b = self.r_bins * self.theta_bins;
        &self.counts[i * b..(i + 1) * b]
    }

    pub fn get(&self, i: usize, r: usize, t: usize) -> f64 {
        self.histogram(i)[r * self.theta_bins + t]
    }

    /// All histograms concatenated in point order.
    pub fn flattened(&self) -> &[f64] {
        &self.counts
    }
}

/// Radial edges `R_INNER * (R_OUTER / R_INNER)^(k / r_bins)`, `k = 0..=r_bins`.
pub fn radial_edges(r_bins: usize) -> Vec<f64> {
    let ratio = R_OUTER / R_INNER;
    (0..=r_bins)
        .map(|k| R_INNER * ratio.powf(k as f64 / r_bins as f64))
        .collect()
}

/// For every point, counts the other points by log distance (relative to
/// the mean pairwise distance) and by angle. Distances below the first edge
/// fall in the innermost bin and beyond the last edge in the outermost, so
/// every histogram sums to `N - 1`.
pub fn shape_context(ps: &PointSet, r_bins: usize, theta_bins: usize) -> ShapeContext {
    assert!(r_bins > 0 && theta_bins > 0, "bin counts must be positive");
    let pts = ps.points();
    let n = pts.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += (pts[j].0 - pts[i].0).hypot(pts[j].1 - pts[i].1);
            }
        }
    }
    let mean = if n > 1 && total > 0.0 {
        total / (n * (n - 1)) as f64
    } else {
        1.0
    };
    let edges = radial_edges(r_bins);
    let inner = &edges[1..r_bins];
    let per = r_bins * theta_bins;
    let mut counts = vec![0.0; n * per];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dx, dy) = (pts[j].0 - pts[i].0, pts[j].1 - pts[i].1);
            let d = dx.hypot(dy) / mean;
            let r = inner.partition_point(|&e| e <= d);
            let theta = dy.atan2(dx).rem_euclid(TAU);
            let t = ((theta / TAU * theta_bins as f64) as usize).min(theta_bins - 1);
            counts[i * per + r * theta_bins + t] += 1.0;
        }
    }
    ShapeContext {
        r_bins,
        theta_bins,
        counts,
    }
}

/// `1 - a.b / (|a| |b|)` over flattened descriptors, clamped to `[0, 2]`.
/// If either descriptor is all zero the distance is 1.
pub fn cosine_distance(a: &ShapeContext, b: &ShapeContext) -> f64 {
    cosine_distance_slices(a.flattened(), b.flattened())
}

pub fn cosine_distance_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "descriptor lengths differ");
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    // sqrt(x * x) == x exactly, so identical descriptors give exactly 0.
    (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0)
}
