//! Boundary tracing and arc-length resampling of silhouettes.

use super::{ClassifyError, PointSet};
use crate::image::BinaryMask;
use crate::saliency::largest_component;

/// Fewest traced boundary pixels accepted by [`extract_points`].
pub const MIN_BOUNDARY: usize = 8;

/// Moore neighbourhood in clockwise order (y down), starting west.
const RING: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn ring_index(d: (i64, i64)) -> usize {
    RING.iter()
        .position(|&r| r == d)
        .expect("unit neighbour offset")
}

/// Outer boundary of the component containing the first foreground pixel
/// in raster order, as a closed clockwise pixel chain (first pixel not
/// repeated at the end).
pub fn trace_boundary(mask: &BinaryMask) -> Vec<(i64, i64)> {
    let w = mask.width();
    let Some(first) = mask.data().iter().position(|&b| b) else {
        return Vec::new();
    };
    let start = ((first % w) as i64, (first / w) as i64);
    let on = |p: (i64, i64)| mask.get_or_false(p.0, p.1);

    // Next boundary pixel clockwise from the backtrack direction, and the
    // direction (from the new pixel) of the last background cell checked.
    let step = |p: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for k in 1..=8 {
            let i = (back + k) % 8;
            let q = (p.0 + RING[i].0, p.1 + RING[i].1);
            if on(q) {
                let prev = (back + k - 1) % 8;
                let b = (p.0 + RING[prev].0, p.1 + RING[prev].1);
                return Some((q, ring_index((b.0 - q.0, b.1 - q.1))));
            }
        }
        None
    };

    // The west neighbour of the raster-first pixel is background.
    let Some((second, back2)) = step(start, 0) else {
        return vec![start];
    };
    let mut chain = vec![start];
    let (mut p, mut back) = (second, back2);
    loop {
        if p == start {
            // Stop once the first move would repeat.
            let (next, _) = step(p, back).expect("start has a neighbour");
            if next == second {
                break;
            }
        }
        chain.push(p);
        let (q, b) = step(p, back).expect("boundary pixel has a neighbour");
        p = q;
        back = b;
    }
    chain
}

/// Samples `n` points at equal arc length along a closed polyline,
/// starting at its first vertex.
pub fn resample_closed(vertices: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let m = vertices.len();
    let seg_len = |i: usize| {
        let (a, b) = (vertices[i], vertices[(i + 1) % m]);
        (b.0 - a.0).hypot(b.1 - a.1)
    };
    let total: f64 = (0..m).map(seg_len).sum();
    if m < 2 || total == 0.0 {
        return vec![vertices[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let (mut seg, mut seg_start) = (0usize, 0.0f64);
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg < m - 1 && seg_start + seg_len(seg) <= s {
            seg_start += seg_len(seg);
            seg += 1;
        }
        let len = seg_len(seg);
        let t = if len > 0.0 {
            ((s - seg_start) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (vertices[seg], vertices[(seg + 1) % m]);
        out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
    out
}

/// Traces the largest component's outer boundary, samples `n` points at
/// equal arc length, and normalizes them to zero mean and unit RMS radius.
pub fn extract_points(mask: &BinaryMask, n: usize) -> Result<PointSet, ClassifyError> {
    if n < 2 {
        return Err(ClassifyError::InvalidParam(format!(
            "need at least 2 sample points, got {n}"
        )));
    }
    let largest = largest_component(mask).ok_or(ClassifyError::EmptyMask)?;
    let chain = trace_boundary(&largest);
    if chain.len() < MIN_BOUNDARY {
        return Err(ClassifyError::DegenerateBoundary {
            pixels: chain.len(),
        });
    }
    let vertices: Vec<(f64, f64)> = chain.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    PointSet::new(resample_closed(&vertices, n))?.normalized()
}
