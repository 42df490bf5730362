//! Corpus-level aggregation and the CSV report formats.
//!
//! Maps and ground-truth masks are paired by file stem. Micro averaging pools
//! confusion counts over all images before forming the curves; macro
//! averaging forms per-image curves and averages the rates threshold by
//! threshold, with AUC the mean of per-image AUCs. The F-measure and timings
//! are always per-image means.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{
    auc, counts_at, even_thresholds, f_measure, Counts, Curve, CurvePoint, MetricsError,
    CURVE_STEPS,
};
use crate::image::{BinaryMask, RealImage};
use crate::scene::{load_image, load_mask, FileFormat};

pub const REPORT_HEADER: &str = "method,f_measure,auc,time_s,detect_time_s,images,averaging";
pub const CURVES_HEADER: &str = "threshold,precision,recall,fpr,tp,fp,fn,tn";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
        })
    }
}

impl FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            _ => Err(format!("averaging must be `micro` or `macro`, got `{s}`")),
        }
    }
}

/// Seconds spent per image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    /// Saliency computation only.
    pub detect_s: f64,
    /// Load, illumination correction and saliency.
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub name: String,
    pub map: RealImage,
    pub gt: BinaryMask,
    pub timing: Option<Timing>,
}

/// An input that was reported and skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusIssue {
    pub name: String,
    pub message: String,
}

impl fmt::Display for CorpusIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub curve: Curve,
    pub auc: f64,
    pub f_measure: f64,
    pub images: usize,
    pub averaging: Averaging,
    /// Mean per-image timing, when every evaluated item carried one.
    pub timing: Option<Timing>,
    pub issues: Vec<CorpusIssue>,
}

/// Scores in-memory items. Items with mismatched sizes or empty ground truth
/// are recorded in `issues` and skipped.
pub fn evaluate_items(
    items: &[EvalItem],
    averaging: Averaging,
) -> Result<EvalReport, MetricsError> {
    let thresholds = even_thresholds(CURVE_STEPS);
    let mut issues = Vec::new();
    let mut per_image: Vec<(Vec<Counts>, f64, Option<Timing>)> = Vec::new();
    for item in items {
        let scored = counts_at(&item.map, &item.gt, &thresholds)
            .and_then(|c| Ok((c, f_measure(&item.map, &item.gt)?)));
        match scored {
            Ok((counts, f)) => per_image.push((counts, f, item.timing)),
            Err(e) => issues.push(CorpusIssue {
                name: item.name.clone(),
                message: e.to_string(),
            }),
        }
    }
    if per_image.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = per_image.len() as f64;
    let pooled: Vec<Counts> = (0..thresholds.len())
        .map(|i| {
            per_image
                .iter()
                .fold(Counts::default(), |acc, (c, _, _)| acc.add(&c[i]))
        })
        .collect();
    let (curve, auc_value) = match averaging {
        Averaging::Micro => {
            let curve = Curve {
                points: thresholds
                    .iter()
                    .zip(&pooled)
                    .map(|(&t, c)| CurvePoint::from_counts(t, *c))
                    .collect(),
            };
            let a = curve.auc();
            (curve, a)
        }
        Averaging::Macro => {
            let points = thresholds
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let mean = |f: fn(&Counts) -> f64| {
                        per_image.iter().map(|(c, _, _)| f(&c[i])).sum::<f64>() / n
                    };
                    CurvePoint {
                        threshold: t,
                        precision: mean(Counts::precision),
                        recall: mean(Counts::recall),
                        fpr: mean(Counts::fpr),
                        counts: pooled[i],
                    }
                })
                .collect();
            let a = per_image
                .iter()
                .map(|(c, _, _)| auc(&c.iter().map(|c| (c.fpr(), c.recall())).collect::<Vec<_>>()))
                .sum::<f64>()
                / n;
            (Curve { points }, a)
        }
    };
    let f_mean = per_image.iter().map(|(_, f, _)| f).sum::<f64>() / n;
    let timing = per_image
        .iter()
        .map(|(_, _, t)| *t)
        .collect::<Option<Vec<Timing>>>()
        .map(|ts| Timing {
            detect_s: ts.iter().map(|t| t.detect_s).sum::<f64>() / n,
            total_s: ts.iter().map(|t| t.total_s).sum::<f64>() / n,
        });
    Ok(EvalReport {
        curve,
        auc: auc_value,
        f_measure: f_mean,
        images: per_image.len(),
        averaging,
        timing,
        issues,
    })
}

/// Image files (`.pgm`, `.png`) in `dir` keyed by stem.
fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, MetricsError> {
    let read =
        fs::read_dir(dir).map_err(|e| MetricsError::Io(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in read {
        let path = entry
            .map_err(|e| MetricsError::Io(format!("{}: {e}", dir.display())))?
            .path();
        if path.is_file() && FileFormat::from_path(&path).is_some() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Loads every map/ground-truth pair. Unpaired or unreadable files become
/// issues. Fails only if either directory is unreadable or holds no images.
pub fn load_corpus(
    maps_dir: &Path,
    gt_dir: &Path,
) -> Result<(Vec<EvalItem>, Vec<CorpusIssue>), MetricsError> {
    let maps = image_files(maps_dir)?;
    let gts = image_files(gt_dir)?;
    if maps.is_empty() || gts.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut items = Vec::new();
    let mut issues = Vec::new();
    for (name, path) in &maps {
        let Some(gt_path) = gts.get(name) else {
            issues.push(CorpusIssue {
                name: name.clone(),
                message: "missing pair: no ground truth".into(),
            });
            continue;
        };
        match (load_image(path), load_mask(gt_path)) {
            (Ok(map), Ok(gt)) => items.push(EvalItem {
                name: name.clone(),
                map: map.into_real(),
                gt,
                timing: None,
            }),
            (Err(e), _) | (_, Err(e)) => issues.push(CorpusIssue {
                name: name.clone(),
                message: e.to_string(),
            }),
        }
    }
    for name in gts.keys().filter(|n| !maps.contains_key(*n)) {
        issues.push(CorpusIssue {
            name: name.clone(),
            message: "missing pair: no saliency map".into(),
        });
    }
    Ok((items, issues))
}

/// [`load_corpus`] followed by [`evaluate_items`]; load issues come first.
pub fn evaluate_corpus(
    maps_dir: &Path,
    gt_dir: &Path,
    averaging: Averaging,
) -> Result<EvalReport, MetricsError> {
    let (items, mut issues) = load_corpus(maps_dir, gt_dir)?;
    let mut report = evaluate_items(&items, averaging)?;
    issues.append(&mut report.issues);
    report.issues = issues;
    Ok(report)
}

fn csv_err(e: impl fmt::Display) -> MetricsError {
    MetricsError::Io(e.to_string())
}

/// One summary row under [`REPORT_HEADER`]. Timing cells are empty when
/// the report has no timings.
pub fn write_report_csv(
    path: &Path,
    method: &str,
    report: &EvalReport,
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(REPORT_HEADER.split(',')).map_err(csv_err)?;
    let (time, detect) = match report.timing {
        Some(t) => (t.total_s.to_string(), t.detect_s.to_string()),
        None => (String::new(), String::new()),
    };
    w.write_record([
        method.to_string(),
        report.f_measure.to_string(),
        report.auc.to_string(),
        time,
        detect,
        report.images.to_string(),
        report.averaging.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush().map_err(csv_err)
}

/// One row per threshold under [`CURVES_HEADER`].
pub fn write_curves_csv(path: &Path, report: &EvalReport) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CURVES_HEADER.split(',')).map_err(csv_err)?;
    for p in &report.curve.points {
        let c = p.counts;
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.fpr.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}
