//! Ordered p-nearest spatial neighbors of every voxel.
//!
//! The table is a pure function of the coordinates and the mesh order p:
//! row j lists the p voxels closest to voxel j in Euclidean distance,
//! excluding j itself, nearest first. Distance ties break toward the
//! smaller voxel index so that regular grids (where ties are everywhere)
//! produce one reproducible table.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::dataset::VoxelCoordinates;
use crate::error::{Error, Result};
use crate::matrix::squared_distance;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodTable {
    p: usize,
    rows: Vec<Vec<usize>>,
}

impl NeighborhoodTable {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_voxels(&self) -> usize {
        self.rows.len()
    }

    /// Neighbor indices of voxel j, nearest first.
    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    /// Export as `voxel_id,rank,neighbor_id,distance` (rank 0-based).
    pub fn write_csv(&self, coords: &VoxelCoordinates, path: &Path) -> Result<()> {
        if coords.len() != self.n_voxels() {
            return Err(Error::DimensionMismatch(format!(
                "table covers {} voxels, coordinates {}",
                self.n_voxels(),
                coords.len()
            )));
        }
        let mut out = String::from("voxel_id,rank,neighbor_id,distance\n");
        for (j, row) in self.rows.iter().enumerate() {
            let cj = coords.get(j);
            for (rank, &k) in row.iter().enumerate() {
                let d = squared_distance(&cj, &coords.get(k)).sqrt();
                out.push_str(&format!("{j},{rank},{k},{d}\n"));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Compare candidates by (squared distance, index).
fn nearer(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Build the p-nearest-neighbor table for the given coordinates.
pub fn build_neighborhood_table(coords: &VoxelCoordinates, p: usize) -> Result<NeighborhoodTable> {
    let n = coords.len();
    if p == 0 || p > n.saturating_sub(1) {
        return Err(Error::InvalidConfig(format!(
            "mesh order p = {p} out of range [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let mut rows = Vec::with_capacity(n);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for j in 0..n {
        let cj = coords.get(j);
        candidates.clear();
        for k in 0..n {
            if k != j {
                candidates.push((squared_distance(&cj, &coords.get(k)), k));
            }
        }
        candidates.select_nth_unstable_by(p - 1, nearer);
        let top = &mut candidates[..p];
        top.sort_unstable_by(nearer);
        rows.push(top.iter().map(|&(_, k)| k).collect());
    }
    Ok(NeighborhoodTable { p, rows })
}
