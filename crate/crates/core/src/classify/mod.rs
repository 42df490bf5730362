//! Silhouette classification by shape-context distance and correntropy.
//!
//! A query silhouette is reduced to `N` boundary points, described by
//! log-polar shape contexts and compared with every template of every class.
//! For each template the query is also aligned by an affine transform that
//! maximizes correntropy. Per template the descriptor distance is divided by
//! the alignment correntropy; the class with the lowest mean ratio wins.

mod descriptor;
mod library;
mod mcc;
mod points;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use descriptor::{
    cosine_distance, cosine_distance_slices, radial_edges, shape_context, ShapeContext, R_INNER,
    R_OUTER,
};
pub use library::{
    read_index, DescriptorConfig, IndexEntry, Template, TemplateClass, TemplateLibrary, INDEX_FILE,
};
pub use mcc::{correntropy, mcc_align, AffineAlignment, IterationRecord, MccConfig, MIN_DET};
pub use points::{extract_points, resample_closed, trace_boundary, MIN_BOUNDARY};

use crate::image::BinaryMask;
use crate::scene::SceneError;

/// Floor applied to correntropies before dividing by them.
pub const MIN_CORRENTROPY: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("boundary has only {pixels} pixels")]
    DegenerateBoundary { pixels: usize },
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("template library: {0}")]
    Library(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Finite 2-D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<(f64, f64)>,
}

impl PointSet {
    /// At least two finite points.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ClassifyError> {
        if points.len() < 2 {
            return Err(ClassifyError::InvalidParam(format!(
                "a point set needs >= 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(ClassifyError::InvalidParam(
                "non-finite point coordinate".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        self.points
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n))
    }

    /// Root-mean-square distance from the centroid.
    pub fn rms_radius(&self) -> f64 {
        let c = self.centroid();
        let n = self.points.len() as f64;
        (self
            .points
            .iter()
            .map(|p| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }

    /// Zero centroid and unit RMS radius.
    pub fn normalized(&self) -> Result<Self, ClassifyError> {
        let c = self.centroid();
        let r = self.rms_radius();
        if r <= 0.0 {
            return Err(ClassifyError::DegenerateBoundary { pixels: 1 });
        }
        Ok(Self {
            points: self
                .points
                .iter()
                .map(|p| ((p.0 - c.0) / r, (p.1 - c.1) / r))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn((f64, f64)) -> (f64, f64)) -> Result<Self, ClassifyError> {
        Self::new(self.points.iter().map(|&p| f(p)).collect())
    }
}

/// How per-template distances and correntropies become class scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreRule {
    /// Mean over templates of `d_ij / c_ij`.
    #[default]
    PerTemplate,
    /// Mean distance divided by mean correntropy.
    Aggregate,
    /// Mean distance only; no alignment needed.
    DescriptorOnly,
}

impl fmt::Display for ScoreRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreRule::PerTemplate => "per-template",
            ScoreRule::Aggregate => "aggregate",
            ScoreRule::DescriptorOnly => "descriptor",
        })
    }
}

impl FromStr for ScoreRule {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-template" => Ok(ScoreRule::PerTemplate),
            "aggregate" => Ok(ScoreRule::Aggregate),
            "descriptor" => Ok(ScoreRule::DescriptorOnly),
            _ => Err(ClassifyError::InvalidParam(format!(
                "score rule must be per-template, aggregate or descriptor, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassifierConfig {
    pub mcc: MccConfig,
    pub rule: ScoreRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    /// Mean descriptor distance over the class's templates.
    pub mean_distance: f64,
    /// Mean alignment correntropy (1 under the descriptor-only rule).
    pub mean_correntropy: f64,
    /// The score ranked by the active rule.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub classes: Vec<ClassEntry>,
    /// `distances[j][i]` for template `i` of class `j`.
    pub distances: Vec<Vec<f64>>,
    pub correntropies: Vec<Vec<f64>>,
    pub predicted: usize,
    /// Another class shares the winning score exactly.
    pub tie: bool,
    pub rule: ScoreRule,
}

/// Mean of the values; used for class averages.
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean descriptor distance from `query` to every template of class `j`.
pub fn class_distance(query: &ShapeContext, library: &TemplateLibrary, j: usize) -> f64 {
    let ds: Vec<f64> = library.classes()[j]
        .templates
        .iter()
        .map(|t| cosine_distance(query, &t.descriptor))
        .collect();
    mean(&ds)
}

/// Ranks classes from per-template distances and correntropies. The
/// lowest score wins and ties go to the lowest class index.
pub fn score_classes(
    names: &[String],
    distances: Vec<Vec<f64>>,
    correntropies: Vec<Vec<f64>>,
    rule: ScoreRule,
) -> Result<ClassScore, ClassifyError> {
    if distances.is_empty()
        || distances.len() != correntropies.len()
        || names.len() != distances.len()
    {
        return Err(ClassifyError::InvalidParam(
            "class lists differ in length or are empty".into(),
        ));
    }
    let mut classes = Vec::with_capacity(distances.len());
    for ((name, d), c) in names.iter().zip(&distances).zip(&correntropies) {
        if d.is_empty() || d.len() != c.len() {
            return Err(ClassifyError::InvalidParam(format!(
                "class `{name}` has no templates"
            )));
        }
        let floored: Vec<f64> = c.iter().map(|&c| c.max(MIN_CORRENTROPY)).collect();
        let (md, mc) = (mean(d), mean(&floored));
        let score = match rule {
            ScoreRule::PerTemplate => mean(
                &d.iter()
                    .zip(&floored)
                    .map(|(d, c)| d / c)
                    .collect::<Vec<_>>(),
            ),
            ScoreRule::Aggregate => md / mc,
            ScoreRule::DescriptorOnly => md,
        };
        classes.push(ClassEntry {
            name: name.clone(),
            mean_distance: md,
            mean_correntropy: mc,
            score,
        });
    }
    let mut predicted = 0;
    for (j, c) in classes.iter().enumerate() {
        if c.score < classes[predicted].score {
            predicted = j;
        }
    }
    let best = classes[predicted].score;
    let tie = classes
        .iter()
        .enumerate()
        .any(|(j, c)| j != predicted && c.score == best);
    Ok(ClassScore {
        classes,
        distances,
        correntropies,
        predicted,
        tie,
        rule,
    })
}

/// Per-template distances and correntropies for an extracted query.
pub fn template_scores(
    query: &PointSet,
    library: &TemplateLibrary,
    config: &ClassifierConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ClassifyError> {
    let dc = library.descriptor_config();
    let sc = shape_context(query, dc.r_bins, dc.theta_bins);
    let mut distances = Vec::new();
    let mut correntropies = Vec::new();
    for class in library.classes() {
        let scored: Vec<(f64, f64)> = class
            .templates
            .par_iter()
            .map(|t| {
                let d = cosine_distance(&sc, &t.descriptor);
                let c = match config.rule {
                    ScoreRule::DescriptorOnly => Ok(1.0),
                    _ => mcc_align(query, &t.points, &config.mcc).map(|a| a.correntropy),
                }?;
                Ok((d, c))
            })
            .collect::<Result<_, ClassifyError>>()?;
        distances.push(scored.iter().map(|s| s.0).collect());
        correntropies.push(scored.iter().map(|s| s.1).collect());
    }
    Ok((distances, correntropies))
}

/// Classifies an already extracted and normalized query.
pub fn classify_points(
    query: &PointSet,
    library: &TemplateLibrary,
    config: &ClassifierConfig,
) -> Result<ClassScore, ClassifyError> {
    let (d, c) = template_scores(query, library, config)?;
    score_classes(&library.class_names(), d, c, config.rule)
}

/// Extracts the query's boundary points and classifies them.
pub fn classify(
    query: &BinaryMask,
    library: &TemplateLibrary,
    config: &ClassifierConfig,
) -> Result<ClassScore, ClassifyError> {
    let points = extract_points(query, library.descriptor_config().n_points)?;
    classify_points(&points, library, config)
}
