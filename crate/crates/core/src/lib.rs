//! Scene-understanding pipeline for a serial-scan underwater LiDAR imager.
//!
//! Frames flow through [`preprocess`] (illumination correction by
//! morphological opening), [`saliency`] (gamma-kernel centre-surround
//! detection), [`tracking`] (constant-velocity prediction of where to aim the
//! dense scan), and [`classify`] (shape-context descriptors with
//! correntropy-based affine alignment). [`dtg`] selects compact template
//! sets by divergence-to-go reinforcement learning, [`metrics`] scores
//! saliency maps against ground truth, and [`pipeline`] ties the stages into
//! the sparse-to-dense mode-switching loop.

pub mod classify;
pub mod dtg;
pub mod image;
pub mod kv;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod saliency;
pub mod scene;
pub mod tracking;
