//! Saliency-map evaluation against binary ground truth.
//!
//! A map is binarized at 256 evenly spaced thresholds `i / 255`. Each
//! threshold yields a confusion count, from which precision, recall and
//! false-positive rate follow. Precision with no detections is defined as 1.
//! AUC is the trapezoidal area under the ROC polyline closed with `(0, 0)` and
//! `(1, 1)`. The F-measure binarizes at `alpha * mean(map)` for each integer
//! alpha in a range and averages `F_beta` over the range.

mod corpus;

use thiserror::Error;

pub use corpus::{
    evaluate_corpus, evaluate_items, load_corpus, write_curves_csv, write_report_csv, Averaging,
    CorpusIssue, EvalItem, EvalReport, Timing, CURVES_HEADER, REPORT_HEADER,
};

use crate::image::{BinaryMask, RealImage};
use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("map is {map_width}x{map_height} but ground truth is {gt_width}x{gt_height}")]
    DimMismatch {
        map_width: usize,
        map_height: usize,
        gt_width: usize,
        gt_height: usize,
    },
    #[error("ground truth has no foreground pixels; recall is undefined")]
    EmptyGroundTruth,
    #[error("no evaluable map/ground-truth pairs")]
    EmptyCorpus,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Number of thresholds in a standard curve.
pub const CURVE_STEPS: usize = 256;

/// Default F-measure alpha range and beta squared.
pub const F_ALPHAS: std::ops::RangeInclusive<u32> = 2..=11;
pub const F_BETA2: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// Zero when there are no positives.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// Zero when there are no negatives.
    pub fn fpr(&self) -> f64 {
        if self.fp + self.tn == 0 {
            0.0
        } else {
            self.fp as f64 / (self.fp + self.tn) as f64
        }
    }

    pub fn add(&self, o: &Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub counts: Counts,
}

impl CurvePoint {
    pub fn from_counts(threshold: f64, counts: Counts) -> Self {
        Self {
            threshold,
            precision: counts.precision(),
            recall: counts.recall(),
            fpr: counts.fpr(),
            counts,
        }
    }
}

/// Points in increasing threshold order; each carries both its PR and its
/// ROC coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// `(recall, precision)` pairs.
    pub fn pr(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.recall, p.precision))
            .collect()
    }

    /// `(fpr, tpr)` pairs.
    pub fn roc(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.fpr, p.recall)).collect()
    }

    pub fn auc(&self) -> f64 {
        auc(&self.roc())
    }
}

/// `i / (steps - 1)` for `i` in `0..steps`.
pub fn even_thresholds(steps: usize) -> Vec<f64> {
    let d = (steps.max(2) - 1) as f64;
    (0..steps).map(|i| i as f64 / d).collect()
}

fn check_dims(map: &RealImage, gt: &BinaryMask) -> Result<(), MetricsError> {
    if map.dims() != gt.dims() {
        return Err(MetricsError::DimMismatch {
            map_width: map.width(),
            map_height: map.height(),
            gt_width: gt.width(),
            gt_height: gt.height(),
        });
    }
    Ok(())
}

/// Map values of foreground and background pixels, each sorted ascending.
fn split_scores(map: &RealImage, gt: &BinaryMask) -> (Vec<f64>, Vec<f64>) {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (&v, &g) in map.data().iter().zip(gt.data()) {
        if g {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    (pos, neg)
}

fn at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&v| v < t)) as u64
}

/// Confusion counts of `map >= t` against `gt` at each threshold.
pub fn counts_at(
    map: &RealImage,
    gt: &BinaryMask,
    thresholds: &[f64],
) -> Result<Vec<Counts>, MetricsError> {
    check_dims(map, gt)?;
    let (pos, neg) = split_scores(map, gt);
    Ok(thresholds
        .iter()
        .map(|&t| {
            let tp = at_least(&pos, t);
            let fp = at_least(&neg, t);
            Counts {
                tp,
                fp,
                fn_: pos.len() as u64 - tp,
                tn: neg.len() as u64 - fp,
            }
        })
        .collect())
}

fn curve_from(map: &RealImage, gt: &BinaryMask, thresholds: &[f64]) -> Result<Curve, MetricsError> {
    check_dims(map, gt)?;
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let counts = counts_at(map, gt, thresholds)?;
    Ok(Curve {
        points: thresholds
            .iter()
            .zip(counts)
            .map(|(&t, c)| CurvePoint::from_counts(t, c))
            .collect(),
    })
}

/// PR and ROC at the 256 thresholds `0, 1/255, ..., 1`.
pub fn pr_roc(map: &RealImage, gt: &BinaryMask) -> Result<Curve, MetricsError> {
    curve_from(map, gt, &even_thresholds(CURVE_STEPS))
}

/// ROC with a threshold at every distinct map value, so no two pixels with
/// different values are ever merged. Its AUC equals the rank statistic.
pub fn roc_exact(map: &RealImage, gt: &BinaryMask) -> Result<Curve, MetricsError> {
    let mut values = map.data().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    curve_from(map, gt, &values)
}

/// Trapezoidal area under `(fpr, tpr)` points, closed with `(0, 0)` and
/// `(1, 1)`. Points are taken in order of increasing `fpr`, then `tpr`.
pub fn auc(roc: &[(f64, f64)]) -> f64 {
    let mut pts = Vec::with_capacity(roc.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(roc);
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// `(1 + b2) P R / (b2 P + R)`, zero when both are zero.
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den <= 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

/// `F_beta` per integer alpha in `alphas` at threshold `alpha * mean(map)`;
/// thresholds above the map maximum score zero.
pub fn f_measure_per_alpha(
    map: &RealImage,
    gt: &BinaryMask,
    alphas: std::ops::RangeInclusive<u32>,
    beta2: f64,
) -> Result<Vec<f64>, MetricsError> {
    check_dims(map, gt)?;
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let (mean, max) = (map.mean(), map.max());
    let alphas: Vec<u32> = alphas.collect();
    let thresholds: Vec<f64> = alphas.iter().map(|&a| a as f64 * mean).collect();
    let counts = counts_at(map, gt, &thresholds)?;
    Ok(thresholds
        .iter()
        .zip(counts)
        .map(|(&t, c)| {
            if t > max {
                0.0
            } else {
                f_beta(c.precision(), c.recall(), beta2)
            }
        })
        .collect())
}

/// Mean of [`f_measure_per_alpha`] over `alpha = 2..=11` with `beta^2 = 0.3`.
pub fn f_measure(map: &RealImage, gt: &BinaryMask) -> Result<f64, MetricsError> {
    let fs = f_measure_per_alpha(map, gt, F_ALPHAS, F_BETA2)?;
    Ok(fs.iter().sum::<f64>() / fs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_convention() {
        let c = Counts {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 5,
        };
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.recall(), 0.0);
        assert_eq!(c.fpr(), 0.0);
    }

    #[test]
    fn thresholds_are_exact_grid() {
        let t = even_thresholds(256);
        assert_eq!(t.len(), 256);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[255], 1.0);
        assert_eq!(t[128], 128.0 / 255.0);
    }

    #[test]
    fn dims_must_match() {
        let r = pr_roc(&RealImage::zeros(3, 3), &BinaryMask::empty(3, 4));
        assert!(matches!(r, Err(MetricsError::DimMismatch { .. })));
        let r = pr_roc(&RealImage::zeros(3, 3), &BinaryMask::empty(3, 3));
        assert!(matches!(r, Err(MetricsError::EmptyGroundTruth)));
    }
}
