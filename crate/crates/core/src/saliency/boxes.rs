//! 8-connected component labelling and per-component bounding boxes.

use std::collections::VecDeque;

use crate::image::{BinaryMask, RealImage, Rect};

/// One connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub rect: Rect,
    /// Mean of the map over the component's pixels.
    pub score: f64,
    /// Foreground pixel count.
    pub area: usize,
}

/// Component label per pixel (`0` is background, labels start at 1 and
/// follow raster order of each component's first pixel) and the label count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (px, py) = ((p % w) as i64, (p / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (px + dx, py + dy);
                    if (dx, dy) == (0, 0) || !mask.get_or_false(x, y) {
                        continue;
                    }
                    let q = y as usize * w + x as usize;
                    if labels[q] == 0 {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Mask of the component with the most pixels (lowest label on ties), or
/// `None` if the mask is empty.
pub fn largest_component(mask: &BinaryMask) -> Option<BinaryMask> {
    let (labels, n) = label_components(mask);
    if n == 0 {
        return None;
    }
    let mut counts = vec![0usize; n + 1];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    let best = (1..=n).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))?;
    let (w, h) = mask.dims();
    Some(
        BinaryMask::new(w, h, labels.iter().map(|&l| l as usize == best).collect())
            .expect("same dims"),
    )
}

/// Boxes around every component of at least `min_area` pixels, scored by
/// the mean of `map` inside the component. Sorted by score descending, then
/// by `(y, x)` of the box ascending.
///
/// # Panics
/// If `map` and `mask` differ in size.
pub fn extract_boxes(mask: &BinaryMask, map: &RealImage, min_area: usize) -> Vec<ScoredBox> {
    assert_eq!(mask.dims(), map.dims(), "mask and map sizes differ");
    let (labels, n) = label_components(mask);
    let w = mask.width();
    // (x0, y0, x1, y1, sum, count)
    let mut acc = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0.0f64, 0usize); n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let a = &mut acc[l as usize - 1];
        a.0 = a.0.min(x);
        a.1 = a.1.min(y);
        a.2 = a.2.max(x);
        a.3 = a.3.max(y);
        a.4 += map.data()[i];
        a.5 += 1;
    }
    let mut boxes: Vec<ScoredBox> = acc
        .into_iter()
        .filter(|a| a.5 >= min_area.max(1))
        .map(|(x0, y0, x1, y1, sum, count)| ScoredBox {
            rect: Rect::new(
                x0 as i64,
                y0 as i64,
                (x1 - x0 + 1) as i64,
                (y1 - y0 + 1) as i64,
            ),
            score: sum / count as f64,
            area: count,
        })
        .collect();
    boxes.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.rect.y.cmp(&b.rect.y))
            .then(a.rect.x.cmp(&b.rect.x))
    });
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| on.contains(&(x, y)))
    }

    #[test]
    fn empty_mask_has_no_boxes() {
        let m = BinaryMask::empty(10, 10);
        assert!(extract_boxes(&m, &RealImage::zeros(10, 10), 1).is_empty());
        assert!(largest_component(&m).is_none());
    }

    #[test]
    fn filled_block() {
        let m = BinaryMask::from_fn(12, 12, |x, y| (5..8).contains(&x) && (5..8).contains(&y));
        let b = extract_boxes(&m, &RealImage::filled(12, 12, 0.5), 1);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].rect, Rect::new(5, 5, 3, 3));
        assert_eq!(b[0].area, 9);
        assert_eq!(b[0].score, 0.5);
    }

    #[test]
    fn diagonal_neighbours_join() {
        let m = mask_from(4, 4, &[(1, 1), (2, 2)]);
        let b = extract_boxes(&m, &RealImage::zeros(4, 4), 1);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].rect, Rect::new(1, 1, 2, 2));
    }

    #[test]
    fn min_area_and_ordering() {
        let m = mask_from(10, 10, &[(0, 0), (5, 5), (5, 6), (8, 0), (8, 1)]);
        let map = RealImage::from_fn(10, 10, |x, _| if x == 5 { 0.9 } else { 0.3 });
        let b = extract_boxes(&m, &map, 2);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].rect.x, 5);
        assert_eq!(b[1].rect, Rect::new(8, 0, 1, 2));
        // Equal scores fall back to (y, x).
        let flat = extract_boxes(&m, &RealImage::zeros(10, 10), 1);
        let order: Vec<(i64, i64)> = flat.iter().map(|b| (b.rect.y, b.rect.x)).collect();
        assert_eq!(order, vec![(0, 0), (0, 8), (5, 5)]);
    }

    #[test]
    fn largest_component_picks_biggest() {
        let m = mask_from(10, 10, &[(0, 0), (5, 5), (5, 6), (6, 6)]);
        let l = largest_component(&m).unwrap();
        assert_eq!(l.count(), 3);
        assert!(!l.get(0, 0));
    }
}
