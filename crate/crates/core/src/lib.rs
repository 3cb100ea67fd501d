//! Voxelwise encoding models for language-model/brain alignment.
//!
//! Pipeline: transcripts and per-word activations ([`stimulus`],
//! [`features`]) are aligned to fMRI frames ([`alignment`]), regressed onto
//! BOLD with cross-validated ridge ([`ridge`]), and scored per voxel
//! ([`scoring`]). [`roi`] aggregates score maps over atlas parcels and
//! [`synth`] generates datasets with known ground truth.

mod binary;
mod linalg;
pub mod alignment;
pub mod cli;
pub mod error;
pub mod features;
pub mod ridge;
pub mod roi;
pub mod scoring;
pub mod stimulus;
pub mod synth;

pub use error::{Error, Result};
