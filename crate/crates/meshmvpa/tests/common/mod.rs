//! Oracles shared by the integration suites. These re-derive results
//! through routes the library does not use, so agreement is evidence, not
//! tautology.

use meshmvpa::matrix::Matrix;
use meshmvpa::rng::Rng;

/// Minimum-norm least-squares solution of X a ≈ c through a full one-sided
/// Jacobi (Hestenes) SVD. The library solves the same problem in closed
/// form (one equation) or through Gram-matrix eigendecompositions; this
/// path shares none of that code.
#[allow(dead_code)]
pub fn pinv_solve_svd(x: &Matrix, c: &[f64]) -> Vec<f64> {
    let w = x.rows();
    let p = x.cols();
    // columns of x as vectors in R^w
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..w).map(|i| x.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let dot = |u: &[f64], t: &[f64]| -> f64 { u.iter().zip(t).map(|(x, y)| x * y).sum() };

    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma.abs() <= 1e-14 * (alpha * beta).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = cos * t;
                for r in 0..w {
                    let (ai, aj) = (a[i][r], a[j][r]);
                    a[i][r] = cos * ai - sin * aj;
                    a[j][r] = sin * ai + cos * aj;
                }
                for r in 0..p {
                    let (vi, vj) = (v[i][r], v[j][r]);
                    v[i][r] = cos * vi - sin * vj;
                    v[j][r] = sin * vi + cos * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigmas: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let max_sigma = sigmas.iter().cloned().fold(0.0, f64::max);
    let cut = max_sigma * w.max(p) as f64 * f64::EPSILON;
    let mut solution = vec![0.0; p];
    for (k, sigma) in sigmas.iter().enumerate() {
        if *sigma <= cut {
            continue;
        }
        // u_k = a_k / sigma; coefficient = (u_k . c) / sigma
        let coef = dot(&a[k], c) / (sigma * sigma);
        for (s, vk) in solution.iter_mut().zip(&v[k]) {
            *s += coef * vk;
        }
    }
    solution
}

/// Brute-force k-nearest-neighbor vote: full sort of all training
/// distances by (distance², index), majority vote over the first k labels,
/// vote ties to the smallest class id.
#[allow(dead_code)]
pub fn knn_vote_oracle(
    train: &Matrix,
    labels: &[usize],
    query: &[f64],
    k: usize,
    n_classes: usize,
) -> usize {
    let mut all: Vec<(f64, usize)> = (0..train.rows())
        .map(|i| {
            let d: f64 = train
                .row(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, i)
        })
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    let mut counts = vec![0usize; n_classes];
    for &(_, i) in all.iter().take(k) {
        counts[labels[i]] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

/// Dataset of pure noise with labels that are balanced within each run but
/// carry no signal (round-robin assignment shuffled per run).
#[allow(dead_code)]
pub fn random_label_dataset(
    seed: u64,
    n_voxels: usize,
    n_runs: usize,
    per_run: usize,
    n_classes: usize,
) -> meshmvpa::dataset::Dataset {
    let mut rng = Rng::new(seed);
    let coords: Vec<[f64; 3]> = (0..n_voxels)
        .map(|_| {
            [
                rng.next_uniform(-8.0, 8.0),
                rng.next_uniform(-8.0, 8.0),
                rng.next_uniform(-8.0, 8.0),
            ]
        })
        .collect();
    let m = n_runs * per_run;
    let data: Vec<f64> = (0..m * n_voxels).map(|_| rng.next_normal()).collect();
    let mut labels = Vec::with_capacity(m);
    let mut run_ids = Vec::with_capacity(m);
    for r in 0..n_runs {
        let mut run_labels: Vec<usize> = (0..per_run).map(|t| t % n_classes).collect();
        rng.shuffle(&mut run_labels);
        labels.extend(run_labels);
        run_ids.extend(std::iter::repeat(r).take(per_run));
    }
    meshmvpa::dataset::Dataset::new(
        meshmvpa::dataset::VoxelCoordinates::new(coords).unwrap(),
        Matrix::from_flat(m, n_voxels, data),
        labels,
        run_ids,
        (0..n_classes).map(|c| format!("class_{c}")).collect(),
    )
    .unwrap()
}
