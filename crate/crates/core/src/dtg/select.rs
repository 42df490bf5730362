//! Per-class template selection and its evaluation by classification.
//!
//! DTG and random selection both start from k-means candidates of each
//! class's pool. DTG for one class is trained against the concatenated
//! transition models of all other classes.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{
    build_transition_model, divergence_table, hu_moments, kmeans_select, random_select,
    standard_actions, train_dtg, DtgConfig, DtgError, KdeConfig, SelectionMethod, SelectionResult,
    TemplateMdp, TransitionModel, DEFAULT_MODEL_STEPS,
};
use crate::classify::{
    cosine_distance, extract_points, score_classes, template_scores, ClassifierConfig, IndexEntry,
    ScoreRule, TemplateClass, TemplateLibrary,
};
use crate::image::BinaryMask;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Templates kept per class.
    pub n: usize,
    /// Clusters for the k-means candidate stage.
    pub clusters: usize,
    /// Candidates taken from each cluster before DTG or random selection.
    pub candidates_per_cluster: usize,
    pub model_steps: usize,
    pub dtg: DtgConfig,
    pub kde: KdeConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n: 10,
            clusters: 10,
            candidates_per_cluster: 2,
            model_steps: DEFAULT_MODEL_STEPS,
            dtg: DtgConfig::default(),
            kde: KdeConfig::default(),
        }
    }
}

/// Selection for one class; `result.chosen` indexes the class's templates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSelection {
    pub class_name: String,
    pub result: SelectionResult,
}

/// Decorrelated seed for a stage and class.
pub fn derive_seed(seed: u64, stage: u64, class: usize) -> u64 {
    let mut z = seed
        ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (class as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pairwise descriptor distances within one class.
pub fn dissimilarity_matrix(class: &TemplateClass) -> Vec<Vec<f64>> {
    let t = &class.templates;
    t.iter()
        .map(|a| {
            t.iter()
                .map(|b| cosine_distance(&a.descriptor, &b.descriptor))
                .collect()
        })
        .collect()
}

/// Template indices entering the DTG and random stages.
fn candidates(
    rows: &[Vec<f64>],
    config: &SelectionConfig,
    seed: u64,
) -> Result<Vec<usize>, DtgError> {
    if rows.len() <= config.clusters * config.candidates_per_cluster {
        return Ok((0..rows.len()).collect());
    }
    Ok(kmeans_select(rows, config.clusters, config.candidates_per_cluster, seed)?.chosen)
}

/// Standard actions that move a state on a cycle of `n`.
fn actions_for(n: usize) -> Vec<i64> {
    standard_actions()
        .into_iter()
        .filter(|a| a.rem_euclid(n as i64) != 0)
        .collect()
}

fn remap(mut r: SelectionResult, cand: &[usize]) -> SelectionResult {
    r.chosen = r.chosen.iter().map(|&i| cand[i]).collect();
    r.chosen.sort_unstable();
    r
}

/// Chooses `config.n` templates of every class.
pub fn select_templates(
    library: &TemplateLibrary,
    method: SelectionMethod,
    config: &SelectionConfig,
    seed: u64,
) -> Result<Vec<ClassSelection>, DtgError> {
    let classes = library.classes();
    for c in classes {
        if config.n == 0 || config.n > c.templates.len() {
            return Err(DtgError::InvalidParam(format!(
                "cannot select {} of the {} templates of `{}`",
                config.n,
                c.templates.len(),
                c.name
            )));
        }
    }
    let rows: Vec<Vec<Vec<f64>>> = classes.iter().map(dissimilarity_matrix).collect();
    if method == SelectionMethod::KMeans {
        return classes
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let result = kmeans_select(&rows[j], config.n, 1, derive_seed(seed, 1, j))?;
                Ok(ClassSelection {
                    class_name: c.name.clone(),
                    result,
                })
            })
            .collect();
    }
    if method == SelectionMethod::Dtg && classes.len() < 2 {
        return Err(DtgError::InvalidParam(
            "DTG selection needs at least two classes".into(),
        ));
    }
    let mut cands = Vec::new();
    let mut mdps = Vec::new();
    for (j, c) in classes.iter().enumerate() {
        let cand = candidates(&rows[j], config, derive_seed(seed, 2, j))?;
        if config.n > cand.len() {
            return Err(DtgError::InvalidParam(format!(
                "only {} candidates in `{}`",
                cand.len(),
                c.name
            )));
        }
        let states = cand
            .iter()
            .map(|&i| hu_moments(&c.templates[i].mask))
            .collect::<Result<Vec<_>, _>>()?;
        mdps.push(TemplateMdp::new(states, actions_for(cand.len()))?);
        cands.push(cand);
    }
    let mut out = Vec::with_capacity(classes.len());
    if method == SelectionMethod::Random {
        for (j, c) in classes.iter().enumerate() {
            let r = random_select(
                &mdps[j],
                config.dtg.steps * config.dtg.episodes,
                config.n,
                derive_seed(seed, 3, j),
            )?;
            out.push(ClassSelection {
                class_name: c.name.clone(),
                result: remap(r, &cands[j]),
            });
        }
        return Ok(out);
    }
    let models: Vec<TransitionModel> = mdps
        .iter()
        .enumerate()
        .map(|(j, m)| build_transition_model(m, config.model_steps, derive_seed(seed, 4, j)))
        .collect::<Result<_, _>>()?;
    let dtg = DtgConfig {
        n_select: config.n,
        ..config.dtg.clone()
    };
    for (j, c) in classes.iter().enumerate() {
        let others: Vec<&TransitionModel> = models
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, m)| m)
            .collect();
        let table = divergence_table(&mdps[j], &models[j], &others, &config.kde)?;
        let (_, r) = train_dtg(&mdps[j], &table, &dtg, derive_seed(seed, 5, j))?;
        out.push(ClassSelection {
            class_name: c.name.clone(),
            result: remap(r, &cands[j]),
        });
    }
    Ok(out)
}

/// Per-class template index lists, in library class order.
pub fn selection_indices(
    library: &TemplateLibrary,
    selections: &[ClassSelection],
) -> Result<Vec<Vec<usize>>, DtgError> {
    library
        .classes()
        .iter()
        .map(|c| {
            selections
                .iter()
                .find(|s| s.class_name == c.name)
                .map(|s| s.result.chosen.clone())
                .ok_or_else(|| {
                    DtgError::InvalidParam(format!("no selection for class `{}`", c.name))
                })
        })
        .collect()
}

/// Writes the chosen templates as a library index (with an extra `method`
/// column) referencing the original silhouette files by absolute path.
pub fn write_selection_csv(
    path: &Path,
    entries: &[IndexEntry],
    selections: &[ClassSelection],
) -> Result<(), DtgError> {
    let io = |e: std::io::Error| DtgError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = |w: &mut csv::Writer<Vec<u8>>, r: &[String]| {
        w.write_record(r).map_err(|e| DtgError::Io(e.to_string()))
    };
    row(
        &mut w,
        &["class_index", "class_name", "file", "method"].map(String::from),
    )?;
    for (j, s) in selections.iter().enumerate() {
        let members: Vec<&IndexEntry> = entries
            .iter()
            .filter(|e| e.class_name == s.class_name)
            .collect();
        for &i in &s.result.chosen {
            let e = members.get(i).ok_or_else(|| {
                DtgError::InvalidParam(format!("no template {i} in `{}`", s.class_name))
            })?;
            let file = fs::canonicalize(&e.path).map_err(io)?;
            row(
                &mut w,
                &[
                    j.to_string(),
                    s.class_name.clone(),
                    file.display().to_string(),
                    s.result.method.to_string(),
                ],
            )?;
        }
    }
    let bytes = w.into_inner().map_err(|e| DtgError::Io(e.to_string()))?;
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(io)
}

/// Counts of true class (rows) against predicted class (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let j = class_names.len();
        Self {
            class_names,
            counts: vec![vec![0; j]; j],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.counts.len()).map(|j| self.counts[j][j]).sum();
        correct as f64 / self.total() as f64
    }

    /// Fraction of each class's queries classified correctly (NaN when a
    /// class has no queries).
    pub fn per_class_rate(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(j, r)| r[j] as f64 / r.iter().sum::<u64>() as f64)
            .collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(j, r)| r.iter().enumerate().all(|(k, &c)| j == k || c == 0))
    }

    /// Header `true_class,<class...>,rate`; one row per true class and a
    /// final `all` row with column totals and overall accuracy.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true_class");
        for n in &self.class_names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",rate\n");
        let rates = self.per_class_rate();
        for (j, r) in self.counts.iter().enumerate() {
            s.push_str(&self.class_names[j]);
            for c in r {
                s.push_str(&format!(",{c}"));
            }
            s.push_str(&format!(",{:.6}\n", rates[j]));
        }
        s.push_str("all");
        for k in 0..self.counts.len() {
            s.push_str(&format!(
                ",{}",
                self.counts.iter().map(|r| r[k]).sum::<u64>()
            ));
        }
        s.push_str(&format!(",{:.6}\n", self.accuracy()));
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DtgError> {
        fs::write(path, self.to_csv()).map_err(|e| DtgError::Io(format!("{}: {e}", path.display())))
    }
}

/// Per-template distances and correntropies of one query against a whole
/// library, so that many selections can be scored without realigning.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryScores {
    pub truth: usize,
    pub distances: Vec<Vec<f64>>,
    pub correntropies: Vec<Vec<f64>>,
}

pub fn score_queries(
    library: &TemplateLibrary,
    queries: &[(usize, BinaryMask)],
    config: &ClassifierConfig,
) -> Result<Vec<QueryScores>, DtgError> {
    let n = library.descriptor_config().n_points;
    queries
        .par_iter()
        .map(|(truth, mask)| {
            let pts = extract_points(mask, n)?;
            let (distances, correntropies) = template_scores(&pts, library, config)?;
            Ok(QueryScores {
                truth: *truth,
                distances,
                correntropies,
            })
        })
        .collect()
}

/// Confusion matrix when only `selection[j]` templates of class `j` vote.
pub fn confusion_from_scores(
    class_names: &[String],
    scores: &[QueryScores],
    selection: &[Vec<usize>],
    rule: ScoreRule,
) -> Result<ConfusionMatrix, DtgError> {
    if selection.len() != class_names.len() || selection.iter().any(Vec::is_empty) {
        return Err(DtgError::EmptySelection);
    }
    let mut cm = ConfusionMatrix::new(class_names.to_vec());
    for q in scores {
        let pick = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter()
                .zip(selection)
                .map(|(row, idx)| idx.iter().map(|&i| row[i]).collect())
                .collect()
        };
        let s = score_classes(
            class_names,
            pick(&q.distances),
            pick(&q.correntropies),
            rule,
        )?;
        cm.add(q.truth, s.predicted);
    }
    Ok(cm)
}

/// Classifies every query against the selected templates only.
pub fn evaluate_selection(
    library: &TemplateLibrary,
    selection: &[Vec<usize>],
    queries: &[(usize, BinaryMask)],
    config: &ClassifierConfig,
) -> Result<ConfusionMatrix, DtgError> {
    if selection.is_empty() || selection.iter().any(Vec::is_empty) {
        return Err(DtgError::EmptySelection);
    }
    if queries.is_empty() {
        return Err(DtgError::InvalidParam("no queries".into()));
    }
    let subset = library.select(selection)?;
    let scores = score_queries(&subset, queries, config)?;
    let all: Vec<Vec<usize>> = subset
        .classes()
        .iter()
        .map(|c| (0..c.templates.len()).collect())
        .collect();
    confusion_from_scores(&subset.class_names(), &scores, &all, config.rule)
}
