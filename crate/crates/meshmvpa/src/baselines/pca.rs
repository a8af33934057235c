//! Principal component analysis with a deterministic sign convention.
//!
//! Components come from the eigendecomposition of whichever side is smaller
//! (covariance for wide samples, Gram for tall features), so fitting cost is
//! bounded by min(samples, features). Each component's largest-magnitude
//! entry is made positive, so repeated fits produce identical models.

use crate::error::{Error, Result};
use crate::linalg::{gram_aat, gram_ata, orthonormal_complete, sym_eigen_desc};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// K orthonormal rows, descending explained variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / x.rows() as f64;
    for m in mean.iter_mut() {
        *m *= inv;
    }
    mean
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for i in 0..c.rows() {
        let row = c.row_mut(i);
        for (v, m) in row.iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

fn apply_sign_convention(row: &mut [f64]) {
    let mut idx = 0;
    for (j, v) in row.iter().enumerate() {
        if v.abs() > row[idx].abs() {
            idx = j;
        }
    }
    if row[idx] < 0.0 {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
}

/// Fit `k` principal components of the rows of `x`.
pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let m = x.rows();
    let f = x.cols();
    if m == 0 || f == 0 {
        return Err(Error::InvalidInput("pca needs a non-empty matrix".into()));
    }
    if k == 0 || k > m.min(f) {
        return Err(Error::InvalidConfig(format!(
            "pca k = {k} out of range [1, {}]",
            m.min(f)
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("pca input".into()));
    }
    let mean = column_means(x);
    let xc = centered(x, &mean);
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };

    let (eigenvalues, raw_rows): (Vec<f64>, Vec<Vec<f64>>) = if f <= m {
        let mut cov = gram_ata(&xc);
        for v in 0..f {
            for w in 0..f {
                cov.set(v, w, cov.get(v, w) / denom);
            }
        }
        let (vals, vecs) = sym_eigen_desc(&cov);
        let rows = (0..f).map(|i| vecs.row(i).to_vec()).collect();
        (vals, rows)
    } else {
        // Gram trick: eigenvectors u of Xc Xcᵀ/(m−1) map to Xcᵀ u.
        let mut gram = gram_aat(&xc);
        for v in 0..m {
            for w in 0..m {
                gram.set(v, w, gram.get(v, w) / denom);
            }
        }
        let (vals, vecs) = sym_eigen_desc(&gram);
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let u = vecs.row(i);
            let mut v = vec![0.0; f];
            for (r, ui) in xc.iter_rows().zip(u) {
                for (vj, xj) in v.iter_mut().zip(r) {
                    *vj += ui * xj;
                }
            }
            let n = dot(&v, &v).sqrt();
            if n > 0.0 {
                for vj in v.iter_mut() {
                    *vj /= n;
                }
            }
            rows.push(v);
        }
        (vals, rows)
    };

    let max_eig = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let cut = max_eig * m.max(f) as f64 * f64::EPSILON;
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for (lambda, row) in eigenvalues.iter().zip(raw_rows) {
        if components.len() == k || *lambda <= cut {
            break;
        }
        components.push(row);
        explained.push(lambda.max(0.0));
    }
    // pad zero-variance directions with an orthonormal completion
    orthonormal_complete(&mut components, k, f);
    while explained.len() < components.len() {
        explained.push(0.0);
    }
    for row in components.iter_mut() {
        apply_sign_convention(row);
    }

    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&components),
        explained_variance: explained,
    })
}

/// Fit with the rank rule: keep every component whose variance is
/// numerically nonzero (at least one), up to min(samples, features).
pub fn pca_fit_auto(x: &Matrix) -> Result<PcaModel> {
    let full = pca_fit(x, x.rows().min(x.cols()))?;
    let rank = full
        .explained_variance
        .iter()
        .filter(|&&v| v > 0.0)
        .count()
        .max(1);
    Ok(PcaModel {
        mean: full.mean,
        components: Matrix::from_rows(
            &(0..rank)
                .map(|i| full.components.row(i).to_vec())
                .collect::<Vec<_>>(),
        ),
        explained_variance: full.explained_variance[..rank].to_vec(),
    })
}

/// Project rows onto the fitted components.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.mean.len() {
        return Err(Error::FeatureMismatch {
            expected: model.mean.len(),
            got: x.cols(),
        });
    }
    let k = model.components.rows();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut buf = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (b, (v, m)) in buf.iter_mut().zip(x.row(i).iter().zip(&model.mean)) {
            *b = v - m;
        }
        let dst = out.row_mut(i);
        for t in 0..k {
            dst[t] = dot(&buf, model.components.row(t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(seed: u64, m: usize, f: usize) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_flat(m, f, (0..m * f).map(|_| rng.next_normal()).collect())
    }

    #[test]
    fn diagonal_two_points() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        let model = pca_fit(&x, 1).unwrap();
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((model.components.get(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((model.components.get(0, 1) - inv_sqrt2).abs() < 1e-12);
        // the single component carries all the variance
        let total = 2.0 + 2.0; // per-feature sample variances
        assert!((model.explained_variance[0] - total).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_within_tolerance() {
        let x = random_matrix(3, 20, 5);
        let model = pca_fit(&x, 5).unwrap();
        let y = pca_transform(&model, &x).unwrap();
        for i in 0..20 {
            for j in 0..5 {
                let mut rec = model.mean[j];
                for t in 0..5 {
                    rec += y.get(i, t) * model.components.get(t, j);
                }
                assert!((rec - x.get(i, j)).abs() < 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn gram_side_reconstruction() {
        // fewer samples than features exercises the Gram path
        let x = random_matrix(4, 6, 30);
        let model = pca_fit(&x, 6).unwrap();
        let y = pca_transform(&model, &x).unwrap();
        for i in 0..6 {
            for j in 0..30 {
                let mut rec = model.mean[j];
                for t in 0..model.components.rows() {
                    rec += y.get(i, t) * model.components.get(t, j);
                }
                assert!((rec - x.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn components_orthonormal() {
        let x = random_matrix(5, 12, 8);
        let model = pca_fit(&x, 8).unwrap();
        let k = model.components.rows();
        for a in 0..k {
            for b in 0..k {
                let d = dot(model.components.row(a), model.components.row(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8, "({a},{b}) = {d}");
            }
        }
    }

    #[test]
    fn projections_have_diagonal_covariance() {
        let x = random_matrix(6, 30, 6);
        let model = pca_fit(&x, 6).unwrap();
        let y = pca_transform(&model, &x).unwrap();
        let means = column_means(&y);
        let mut cov = Matrix::zeros(6, 6);
        for i in 0..30 {
            for a in 0..6 {
                for b in 0..6 {
                    cov.set(
                        a,
                        b,
                        cov.get(a, b) + (y.get(i, a) - means[a]) * (y.get(i, b) - means[b]),
                    );
                }
            }
        }
        let max_var = (0..6).map(|a| cov.get(a, a)).fold(0.0, f64::max);
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert!(cov.get(a, b).abs() <= 1e-8 * max_var);
                }
            }
        }
    }

    #[test]
    fn rank_capped_by_sample_count() {
        // 4 samples in 10 features: centered rank <= 3
        let x = random_matrix(7, 4, 10);
        let model = pca_fit_auto(&x).unwrap();
        assert!(model.components.rows() <= 4);
        assert!(model.explained_variance.iter().all(|&v| v > 0.0));
        assert!(model.components.rows() <= 3);
    }

    #[test]
    fn k_out_of_range() {
        let x = random_matrix(8, 5, 3);
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 4).is_err());
    }

    #[test]
    fn deterministic_fit() {
        let x = random_matrix(9, 15, 7);
        assert_eq!(pca_fit(&x, 7).unwrap(), pca_fit(&x, 7).unwrap());
    }
}
