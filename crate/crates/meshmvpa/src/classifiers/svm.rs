//! Soft-margin support vector machines trained by sequential minimal
//! optimization (SMO), with one-vs-one multiclass voting.
//!
//! The solver optimizes pairs of multipliers until no example violates the
//! KKT conditions by more than the tolerance. Heuristic choices that Platt's
//! description leaves random are replaced by deterministic scans so a given
//! dataset always trains to the same model.

use crate::matrix::{dot, squared_distance, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResolvedKernel {
    Linear,
    Rbf { sigma: f64 },
}

impl ResolvedKernel {
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            ResolvedKernel::Linear => dot(u, v),
            ResolvedKernel::Rbf { sigma } => {
                (-squared_distance(u, v) / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

/// Kernel Gram matrix of one sample set.
pub fn kernel_matrix(x: &Matrix, kernel: ResolvedKernel) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// A trained binary machine over one sample set (labels in {-1, +1}).
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub alphas: Vec<f64>,
    pub bias: f64,
}

const STEP_EPS: f64 = 1e-12;

struct Smo<'a> {
    k: &'a Matrix,
    y: &'a [f64],
    c: f64,
    tol: f64,
    alphas: Vec<f64>,
    bias: f64,
    /// E_i = f(x_i) − y_i
    errors: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(k: &'a Matrix, y: &'a [f64], c: f64, tol: f64) -> Self {
        Smo {
            k,
            y,
            c,
            tol,
            alphas: vec![0.0; y.len()],
            bias: 0.0,
            errors: y.iter().map(|&yi| -yi).collect(),
        }
    }

    fn unbound(&self, i: usize) -> bool {
        self.alphas[i] > STEP_EPS && self.alphas[i] < self.c - STEP_EPS
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s > 0.0 {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        } else {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        };
        if lo >= hi {
            return false;
        }
        let k11 = self.k.get(i1, i1);
        let k12 = self.k.get(i1, i2);
        let k22 = self.k.get(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // objective at both clip ends; prefer the lower end on ties
            let f1 = y1 * (e1 - self.bias) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 - self.bias) - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj_lo =
                l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            let obj_hi =
                h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if obj_lo < obj_hi - STEP_EPS {
                lo
            } else if obj_lo > obj_hi + STEP_EPS {
                hi
            } else {
                return false;
            }
        };
        if (a2_new - a2).abs() < STEP_EPS * (a2_new + a2 + STEP_EPS) {
            return false;
        }
        // snap to the box to keep bound detection exact
        if a2_new < STEP_EPS {
            a2_new = 0.0;
        } else if a2_new > self.c - STEP_EPS {
            a2_new = self.c;
        }
        let mut a1_new = a1 + s * (a2 - a2_new);
        if a1_new < STEP_EPS {
            a1_new = 0.0;
        } else if a1_new > self.c - STEP_EPS {
            a1_new = self.c;
        }

        // with f(x) = Σ αyK + b, forcing y·f = 1 at an unbound point gives
        // b_new = b − E − Δ terms
        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let delta_b = new_bias - self.bias;
        for i in 0..self.y.len() {
            self.errors[i] += d1 * self.k.get(i1, i) + d2 * self.k.get(i2, i) + delta_b;
        }
        self.alphas[i1] = a1_new;
        self.alphas[i2] = a2_new;
        self.bias = new_bias;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alphas[i2];
        let r2 = self.errors[i2] * y2;
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let n = self.y.len();
        // second-choice heuristic: largest |E1 - E2| among unbound points
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if self.unbound(i) {
                let gap = (self.errors[i] - self.errors[i2]).abs();
                if best.map_or(true, |(g, _)| gap > g) {
                    best = Some((gap, i));
                }
            }
        }
        if let Some((_, i1)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // deterministic fallbacks: scan unbound, then all, from i2+1
        for off in 1..=n {
            let i1 = (i2 + off) % n;
            if self.unbound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        for off in 1..=n {
            let i1 = (i2 + off) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    fn solve(mut self) -> BinarySvm {
        let n = self.y.len();
        let max_rounds = 500 + 100 * n;
        let mut examine_all = true;
        let mut rounds = 0;
        loop {
            let mut changed = 0usize;
            for i in 0..n {
                if examine_all || self.unbound(i) {
                    if self.examine(i) {
                        changed += 1;
                    }
                }
            }
            rounds += 1;
            if examine_all {
                if changed == 0 {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
            if rounds >= max_rounds {
                break; // best-effort model; callers can audit via KKT residuals
            }
        }
        BinarySvm {
            alphas: self.alphas,
            bias: self.bias,
        }
    }
}

/// Train on a precomputed kernel matrix; `y` entries must be ±1.
pub fn train_binary_on_kernel(k: &Matrix, y: &[f64], cost: f64, tol: f64) -> BinarySvm {
    Smo::new(k, y, cost, tol).solve()
}

/// Train a binary machine from raw samples.
pub fn train_binary(
    x: &Matrix,
    y: &[f64],
    kernel: ResolvedKernel,
    cost: f64,
    tol: f64,
) -> BinarySvm {
    let k = kernel_matrix(x, kernel);
    train_binary_on_kernel(&k, y, cost, tol)
}

/// Largest KKT residual over all multipliers.
///
/// α=0 demands y·f ≥ 1, α=C demands y·f ≤ 1, interior α demands y·f = 1;
/// the residual is the violated margin amount.
pub fn max_kkt_violation(k: &Matrix, y: &[f64], cost: f64, svm: &BinarySvm) -> f64 {
    let n = y.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut f = svm.bias;
        for j in 0..n {
            if svm.alphas[j] != 0.0 {
                f += svm.alphas[j] * y[j] * k.get(i, j);
            }
        }
        let yf = y[i] * f;
        let a = svm.alphas[i];
        let viol = if a <= STEP_EPS {
            (1.0 - yf).max(0.0)
        } else if a >= cost - STEP_EPS {
            (yf - 1.0).max(0.0)
        } else {
            (yf - 1.0).abs()
        };
        worst = worst.max(viol);
    }
    worst
}

/// One trained class pair of a one-vs-one multiclass machine. The smaller
/// class id is the positive side, so a decision value of exactly zero
/// resolves to the smaller id.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PairFit {
    pub class_lo: usize,
    pub class_hi: usize,
    pub support: Matrix,
    /// alpha_t * y_t for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SvmFit {
    pub kernel: ResolvedKernel,
    pub cost: f64,
    pub pairs: Vec<PairFit>,
}

pub(crate) const KKT_TOL: f64 = 1e-3;

pub(crate) fn fit_one_vs_one(
    x: &Matrix,
    y: &[usize],
    classes: &[usize],
    kernel: ResolvedKernel,
    cost: f64,
) -> SvmFit {
    let mut pairs = Vec::new();
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let rows: Vec<usize> = (0..x.rows()).filter(|&i| y[i] == a || y[i] == b).collect();
            let sub = x.select_rows(&rows);
            let signed: Vec<f64> = rows
                .iter()
                .map(|&i| if y[i] == a { 1.0 } else { -1.0 })
                .collect();
            let svm = train_binary(&sub, &signed, kernel, cost, KKT_TOL);
            let sv_rows: Vec<usize> = (0..rows.len())
                .filter(|&t| svm.alphas[t] > STEP_EPS)
                .collect();
            pairs.push(PairFit {
                class_lo: a,
                class_hi: b,
                support: sub.select_rows(&sv_rows),
                coef: sv_rows.iter().map(|&t| svm.alphas[t] * signed[t]).collect(),
                bias: svm.bias,
            });
        }
    }
    SvmFit {
        kernel,
        cost,
        pairs,
    }
}

impl PairFit {
    pub fn decision(&self, kernel: ResolvedKernel, query: &[f64]) -> f64 {
        let mut f = self.bias;
        for (t, c) in self.coef.iter().enumerate() {
            f += c * kernel.eval(self.support.row(t), query);
        }
        f
    }
}

impl SvmFit {
    /// Majority vote over pairs; ties break to the smallest class id.
    pub fn predict_one(&self, query: &[f64], n_classes: usize) -> usize {
        let mut votes = vec![0usize; n_classes];
        for pair in &self.pairs {
            let f = pair.decision(self.kernel, query);
            let winner = if f >= 0.0 {
                pair.class_lo
            } else {
                pair.class_hi
            };
            votes[winner] += 1;
        }
        let mut best = 0;
        for c in 1..n_classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn xor_data() -> (Matrix, Vec<f64>) {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ]);
        (x, vec![1.0, 1.0, -1.0, -1.0])
    }

    #[test]
    fn xor_with_rbf_fits_exactly() {
        let (x, y) = xor_data();
        let kernel = ResolvedKernel::Rbf { sigma: 1.0 };
        let k = kernel_matrix(&x, kernel);
        let svm = train_binary_on_kernel(&k, &y, 10.0, KKT_TOL);
        for i in 0..4 {
            let mut f = svm.bias;
            for j in 0..4 {
                f += svm.alphas[j] * y[j] * k.get(i, j);
            }
            assert!(f * y[i] > 0.0, "point {i} misclassified, f={f}");
        }
        assert!(max_kkt_violation(&k, &y, 10.0, &svm) <= KKT_TOL);
    }

    #[test]
    fn linear_separable_blobs_zero_training_error() {
        let mut rng = Rng::new(17);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..10 {
            rows.push(vec![
                rng.next_uniform(-1.0, 1.0),
                rng.next_uniform(-1.0, 1.0),
            ]);
            y.push(1.0);
        }
        for _ in 0..10 {
            rows.push(vec![
                5.0 + rng.next_uniform(-1.0, 1.0),
                5.0 + rng.next_uniform(-1.0, 1.0),
            ]);
            y.push(-1.0);
        }
        let x = Matrix::from_rows(&rows);
        let svm = train_binary(&x, &y, ResolvedKernel::Linear, 10.0, KKT_TOL);
        let k = kernel_matrix(&x, ResolvedKernel::Linear);
        for i in 0..20 {
            let mut f = svm.bias;
            for j in 0..20 {
                f += svm.alphas[j] * y[j] * k.get(i, j);
            }
            assert!(f * y[i] > 0.0, "point {i} misclassified");
        }
        assert!(max_kkt_violation(&k, &y, 10.0, &svm) <= KKT_TOL);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = xor_data();
        let kernel = ResolvedKernel::Rbf { sigma: 0.7 };
        let a = train_binary(&x, &y, kernel, 5.0, KKT_TOL);
        let b = train_binary(&x, &y, kernel, 5.0, KKT_TOL);
        assert_eq!(a, b);
    }

    #[test]
    fn one_vs_one_votes_with_deterministic_ties() {
        // three well-separated 1-D classes
        let x = Matrix::from_rows(&[
            vec![0.0],
            vec![0.1],
            vec![5.0],
            vec![5.1],
            vec![10.0],
            vec![10.1],
        ]);
        let y = vec![0, 0, 1, 1, 2, 2];
        let fit = fit_one_vs_one(&x, &y, &[0, 1, 2], ResolvedKernel::Linear, 10.0);
        assert_eq!(fit.pairs.len(), 3);
        assert_eq!(fit.predict_one(&[0.05], 3), 0);
        assert_eq!(fit.predict_one(&[5.05], 3), 1);
        assert_eq!(fit.predict_one(&[10.05], 3), 2);
    }
}
