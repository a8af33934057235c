//! Mesh arc-weight features for multi-voxel pattern analysis.
//!
//! Voxel time-series classification usually feeds raw intensity vectors to a
//! classifier. This crate instead builds a star mesh around every voxel — the
//! voxel plus its p nearest spatial neighbors — and regresses the center
//! intensity on the neighbor intensities at each time sample. The fitted arc
//! weights, concatenated across voxels, form the mesh arc descriptor (MAD)
//! feature vector that captures local *relationships* between voxels rather
//! than their levels.
//!
//! The toolkit around that idea:
//!
//! * [`dataset`] — dataset model, CSV/JSON bundle format, hemodynamic label
//!   shifting, run-based splits
//! * [`neighborhood`] — deterministic p-nearest-neighbor tables
//! * [`mesh`] — arc-weight estimation and MAD extraction
//! * [`baselines`] — PCA and Searchlight comparison pipelines
//! * [`classifiers`] — k-NN, naive Bayes (Gaussian/KDE), SVM (SMO), and a
//!   small backprop network behind one train/predict contract
//! * [`crossval`] — leave-one-run-out cross-validation with nested
//!   hyperparameter grid search and report/benchmark output
//! * [`synthgen`] — synthetic datasets whose class signal lives only in
//!   neighbor relationships, not in intensity marginals
//! * [`cli`] — the `meshmvpa` binary: `synth`, `extract`, `cv`, `bench`
//!
//! Every operation is deterministic given its inputs (and seeds), down to
//! documented tie-breaking rules, so results are reproducible bit for bit.
//!
//! See the crate examples for runnable walkthroughs of each capability.

pub mod baselines;
pub mod classifiers;
pub mod cli;
pub mod crossval;
pub mod dataset;
pub mod error;
mod linalg;
pub mod matrix;
pub mod mesh;
pub mod neighborhood;
pub mod param;
pub mod rng;
pub mod synthgen;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use matrix::Matrix;
