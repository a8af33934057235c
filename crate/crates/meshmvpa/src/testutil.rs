//! Shared helpers for unit tests.

use crate::dataset::{Dataset, VoxelCoordinates};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Random dataset: `n` voxels at uniform coordinates, `runs * per_run`
/// noise samples, labels cycling over `c` classes within each run.
pub(crate) fn random_dataset(
    seed: u64,
    n: usize,
    runs: usize,
    per_run: usize,
    c: usize,
) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        entries.push([
            rng.next_uniform(-10.0, 10.0),
            rng.next_uniform(-10.0, 10.0),
            rng.next_uniform(-10.0, 10.0),
        ]);
    }
    let m = runs * per_run;
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(rng.next_normal());
    }
    let mut labels = Vec::with_capacity(m);
    let mut run_ids = Vec::with_capacity(m);
    for r in 0..runs {
        for t in 0..per_run {
            labels.push(t % c);
            run_ids.push(r);
        }
    }
    Dataset::new(
        VoxelCoordinates::new(entries).unwrap(),
        Matrix::from_flat(m, n, data),
        labels,
        run_ids,
        (0..c).map(|i| format!("class_{i}")).collect(),
    )
    .unwrap()
}
