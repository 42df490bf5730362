//! Template selection by divergence-to-go.
//!
//! Each candidate template of a class is a state described by its Hu
//! moments. States sit on a cycle and every action jumps a fixed number of
//! places along it. A random-policy rollout of each class becomes a
//! transition model, and the divergence between a class's model and those
//! of the other classes plays the role of reward. The most visited states
//! under the learned divergence-to-go policy are the most discriminative
//! templates.

mod hu;
mod kde;
mod kmeans;
mod ktd;
mod mdp;
mod select;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use hu::{hu_invariants, hu_moments, signed_log, HuState, SIGNED_LOG_SCALE};
pub use kde::{
    conditional_mixture, cs_divergence, divergence, divergence_table, pooled_bandwidth,
    silverman_bandwidth, DivergenceTable, KdeConfig, Mixture,
};
pub use kmeans::{kmeans, kmeans_select, MAX_LLOYD_ITERATIONS};
pub use ktd::{
    learn_dtg, median_pairwise_distance, random_select, state_kernel, top_visited, train_dtg,
    DtgConfig, DtgFunction,
};
pub use mdp::{
    build_transition_model, standard_actions, TemplateMdp, Transition, TransitionModel,
    DEFAULT_MODEL_STEPS,
};
pub use select::{
    confusion_from_scores, derive_seed, dissimilarity_matrix, evaluate_selection, score_queries,
    select_templates, selection_indices, write_selection_csv, ClassSelection, ConfusionMatrix,
    QueryScores, SelectionConfig,
};

use crate::classify::ClassifyError;

#[derive(Debug, Error)]
pub enum DtgError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("discount must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("transition model is empty")]
    EmptyModel,
    #[error("no stored transitions near the queried state and action")]
    NoSupport,
    #[error("selection is empty")]
    EmptySelection,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Dtg,
    Random,
    KMeans,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Dtg => "dtg",
            SelectionMethod::Random => "random",
            SelectionMethod::KMeans => "kmeans",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = DtgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dtg" => Ok(SelectionMethod::Dtg),
            "random" => Ok(SelectionMethod::Random),
            "kmeans" => Ok(SelectionMethod::KMeans),
            _ => Err(DtgError::InvalidParam(format!(
                "method must be dtg, kmeans or random, got `{s}`"
            ))),
        }
    }
}

/// Visit counts (empty for k-means) and the chosen state or template
/// indices, distinct and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub visits: Vec<u64>,
    pub chosen: Vec<usize>,
}
