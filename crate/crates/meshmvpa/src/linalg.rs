//! Small dense linear-algebra kernels: symmetric eigendecomposition,
//! minimum-norm least squares, ridge solves.
//!
//! Everything here targets the problem sizes this crate actually sees
//! (mesh systems of order p ≤ ~10, covariance matrices up to a few
//! hundred rows), favoring determinism and clarity over asymptotics.

use crate::matrix::{dot, Matrix};

const EPS: f64 = f64::EPSILON;

/// XᵀX (cols × cols).
pub(crate) fn gram_ata(x: &Matrix) -> Matrix {
    let p = x.cols();
    let mut g = Matrix::zeros(p, p);
    for row in x.iter_rows() {
        for i in 0..p {
            let xi = row[i];
            if xi == 0.0 {
                continue;
            }
            let gi = g.row_mut(i);
            for (j, &xj) in row.iter().enumerate() {
                gi[j] += xi * xj;
            }
        }
    }
    g
}

/// XXᵀ (rows × rows).
pub(crate) fn gram_aat(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), x.row(j));
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the rows of the returned matrix. Ties keep the pre-sort (diagonal) order,
/// so the output is deterministic.
pub(crate) fn sym_eigen_desc(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric eigen needs a square matrix");
    let mut m = a.clone();
    // v holds eigenvectors as columns.
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m.get(i, j) * m.get(i, j);
            }
        }
        s
    };
    let frob: f64 = m.data().iter().map(|x| x * x).sum();
    let tol = (frob * EPS * EPS).max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &idx) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(r, k, v.get(k, idx));
        }
    }
    (eigenvalues, vectors)
}

/// y = A⁺ b for a symmetric positive semidefinite A, via eigendecomposition
/// with relative rank truncation.
pub(crate) fn pinv_sym_apply(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let (vals, vecs) = sym_eigen_desc(a);
    let max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = max * n as f64 * EPS;
    let mut y = vec![0.0; n];
    for (lambda, vec_row) in vals.iter().zip(0..n) {
        if *lambda <= cut {
            continue;
        }
        let v = vecs.row(vec_row);
        let coef = dot(v, b) / lambda;
        for (yi, vi) in y.iter_mut().zip(v) {
            *yi += coef * vi;
        }
    }
    y
}

/// Minimum-l2-norm solution of the least-squares problem  X a ≈ c.
///
/// Underdetermined systems route through the w×w Gram matrix
/// (a = Xᵀ (XXᵀ)⁺ c), overdetermined ones through the p×p normal
/// equations (a = (XᵀX)⁺ Xᵀ c).
pub(crate) fn min_norm_lstsq(x: &Matrix, c: &[f64]) -> Vec<f64> {
    let w = x.rows();
    let p = x.cols();
    assert_eq!(w, c.len(), "rhs length mismatch");
    if w <= p {
        let g = gram_aat(x);
        let u = pinv_sym_apply(&g, c);
        let mut a = vec![0.0; p];
        for (row, ui) in x.iter_rows().zip(&u) {
            for (aj, xj) in a.iter_mut().zip(row) {
                *aj += ui * xj;
            }
        }
        a
    } else {
        let h = gram_ata(x);
        let mut xtc = vec![0.0; p];
        for (row, ci) in x.iter_rows().zip(c) {
            for (bj, xj) in xtc.iter_mut().zip(row) {
                *bj += ci * xj;
            }
        }
        pinv_sym_apply(&h, &xtc)
    }
}

/// Unique minimizer of ‖Xa − c‖² + λ‖a‖² for λ > 0, via Cholesky on
/// XᵀX + λI.
pub(crate) fn ridge_solve(x: &Matrix, c: &[f64], lambda: f64) -> Vec<f64> {
    assert!(lambda > 0.0);
    let p = x.cols();
    let mut a = gram_ata(x);
    for i in 0..p {
        a.set(i, i, a.get(i, i) + lambda);
    }
    let mut rhs = vec![0.0; p];
    for (row, ci) in x.iter_rows().zip(c) {
        for (bj, xj) in rhs.iter_mut().zip(row) {
            *bj += ci * xj;
        }
    }
    cholesky_solve(&a, &rhs).expect("XtX + lambda*I is positive definite")
}

/// Solve A y = b for symmetric positive definite A. Returns None if the
/// factorization hits a non-positive pivot.
pub(crate) fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    // forward then back substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    Some(z)
}

/// Extend `rows` (orthonormal) to `target` rows of dimension `dim` by
/// orthogonalizing unit basis vectors in index order. Deterministic.
pub(crate) fn orthonormal_complete(rows: &mut Vec<Vec<f64>>, target: usize, dim: usize) {
    let mut basis = 0usize;
    while rows.len() < target && basis < dim {
        let mut cand = vec![0.0; dim];
        cand[basis] = 1.0;
        basis += 1;
        // two Gram-Schmidt passes for stability
        for _ in 0..2 {
            for r in rows.iter() {
                let proj = dot(&cand, r);
                for (c, ri) in cand.iter_mut().zip(r) {
                    *c -= proj * ri;
                }
            }
        }
        let n = dot(&cand, &cand).sqrt();
        if n > 1e-8 {
            for c in cand.iter_mut() {
                *c /= n;
            }
            rows.push(cand);
        }
    }
}
