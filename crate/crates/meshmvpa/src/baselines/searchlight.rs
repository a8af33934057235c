//! Searchlight voxel selection: score every voxel by the cross-validated
//! Gaussian naive Bayes accuracy of its local block, then keep the voxels
//! whose score clears a threshold.
//!
//! The block is a set of integer offsets applied to each voxel's grid
//! position. The default is the corner cube {0,1}³ — exactly eight voxels
//! including the center — clipped at the volume boundary. Scores are
//! computed on training data only; the held-out fold of the outer
//! cross-validation never enters.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::gnb;
use crate::dataset::{Dataset, VoxelCoordinates};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::param::AutoOr;

/// Corner block offsets {0,1}³ in lexicographic order.
pub fn corner_block() -> Vec<[i64; 3]> {
    let mut block = Vec::with_capacity(8);
    for dx in 0..2 {
        for dy in 0..2 {
            for dz in 0..2 {
                block.push([dx, dy, dz]);
            }
        }
    }
    block
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchlightConfig {
    /// Integer offsets defining each voxel's local region; must contain
    /// (0,0,0).
    pub block: Vec<[i64; 3]>,
    /// Score threshold for selection, or auto (tuned by inner CV).
    pub threshold: AutoOr<f64>,
}

impl Default for SearchlightConfig {
    fn default() -> Self {
        SearchlightConfig {
            block: corner_block(),
            threshold: AutoOr::Auto,
        }
    }
}

impl SearchlightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block.is_empty() {
            return Err(Error::InvalidConfig("searchlight block is empty".into()));
        }
        if !self.block.contains(&[0, 0, 0]) {
            return Err(Error::InvalidConfig(
                "searchlight block must include the (0,0,0) offset".into(),
            ));
        }
        Ok(())
    }
}

/// Candidate thresholds for auto mode: 0.10, 0.15, ..., 0.50.
pub fn threshold_grid() -> Vec<f64> {
    (0..9).map(|i| (10 + 5 * i) as f64 / 100.0).collect()
}

/// Snap coordinates to an integer grid (tolerance 1e-6 per axis).
pub fn snap_to_grid(coords: &VoxelCoordinates) -> Result<Vec<[i64; 3]>> {
    let mut snapped = Vec::with_capacity(coords.len());
    for (j, c) in coords.iter().enumerate() {
        let mut cell = [0i64; 3];
        for (axis, &v) in c.iter().enumerate() {
            let r = v.round();
            if (v - r).abs() > 1e-6 {
                return Err(Error::NonGridCoordinates(format!(
                    "voxel {j} axis {axis} value {v} is {} from the nearest integer",
                    (v - r).abs()
                )));
            }
            cell[axis] = r as i64;
        }
        snapped.push(cell);
    }
    let mut seen: HashMap<[i64; 3], usize> = HashMap::new();
    for (j, cell) in snapped.iter().enumerate() {
        if let Some(&first) = seen.get(cell) {
            return Err(Error::NonGridCoordinates(format!(
                "voxels {first} and {j} snap to the same grid cell {cell:?}"
            )));
        }
        seen.insert(*cell, j);
    }
    Ok(snapped)
}

fn block_members(
    snapped: &[[i64; 3]],
    lookup: &HashMap<[i64; 3], usize>,
    block: &[[i64; 3]],
    j: usize,
) -> Vec<usize> {
    let base = snapped[j];
    block
        .iter()
        .filter_map(|off| {
            lookup
                .get(&[base[0] + off[0], base[1] + off[1], base[2] + off[2]])
                .copied()
        })
        .collect()
}

/// Per-voxel cross-validated GNB accuracy on the voxel's block, computed
/// over the given folds (each entry lists held-out sample indices; the rest
/// of the training data fits the scorer).
pub fn searchlight_scores(
    train: &Dataset,
    cfg: &SearchlightConfig,
    folds: &[Vec<usize>],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if folds.is_empty() || folds.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidConfig(
            "searchlight scoring needs non-empty folds".into(),
        ));
    }
    let snapped = snap_to_grid(train.coords())?;
    let lookup: HashMap<[i64; 3], usize> =
        snapped.iter().enumerate().map(|(j, c)| (*c, j)).collect();

    let m = train.n_samples();
    let mut in_fold = vec![usize::MAX; m];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            if i >= m {
                return Err(Error::InvalidInput(format!(
                    "fold index {i} out of range for {m} samples"
                )));
            }
            in_fold[i] = f;
        }
    }
    let fit_rows_per_fold: Vec<Vec<usize>> = (0..folds.len())
        .map(|f| (0..m).filter(|&i| in_fold[i] != f).collect())
        .collect();
    let total_test: usize = folds.iter().map(|f| f.len()).sum();

    let labels = train.labels();
    let mut scores = Vec::with_capacity(train.n_voxels());
    for j in 0..train.n_voxels() {
        let members = block_members(&snapped, &lookup, &cfg.block, j);
        let block_x = train.intensities().select_cols(&members);
        let mut correct = 0usize;
        for (f, fold) in folds.iter().enumerate() {
            let fit_rows = &fit_rows_per_fold[f];
            let fit_y: Vec<usize> = fit_rows.iter().map(|&i| labels[i]).collect();
            let mut classes = fit_y.clone();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() < 2 {
                // degenerate fold: a constant predictor is all that is left
                let only = classes[0];
                correct += fold.iter().filter(|&&i| labels[i] == only).count();
                continue;
            }
            let fit_x = block_x.select_rows(fit_rows);
            let g = gnb::fit_gaussian(&fit_x, &fit_y, &classes);
            for &i in fold {
                let pos = g.predict_position(block_x.row(i));
                if classes[pos] == labels[i] {
                    correct += 1;
                }
            }
        }
        scores.push(correct as f64 / total_test as f64);
    }
    Ok(scores)
}

/// Voxels whose score is at or above the threshold, ascending.
pub fn searchlight_select(scores: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let mask: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(j, _)| j)
        .collect();
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// The fallback when a threshold empties the mask: the single best-scoring
/// voxel (ties to the smallest index).
pub fn top_voxel(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = j;
        }
    }
    best
}

pub fn write_scores_csv(scores: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("voxel_id,score\n");
    for (j, s) in scores.iter().enumerate() {
        out.push_str(&format!("{j},{s}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_mask_csv(mask: &[usize], path: &Path) -> Result<()> {
    let mut out = String::from("voxel_id\n");
    for j in mask {
        out.push_str(&format!("{j}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Raw intensity features restricted to the mask.
pub fn masked_features(x: &Matrix, mask: &[usize]) -> Matrix {
    x.select_cols(mask)
}
