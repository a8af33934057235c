//! Two-layer backpropagation network: one sigmoid hidden layer, softmax
//! output, cross-entropy loss, full-batch gradient descent.
//!
//! `hidden = 0` removes the hidden layer and leaves softmax regression on
//! linear outputs. The loss and gradient are exposed as free functions over
//! a flat parameter vector so they can be checked against finite
//! differences.

use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NnShape {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
}

impl NnShape {
    pub fn n_params(&self) -> usize {
        if self.hidden == 0 {
            self.n_out * self.n_in + self.n_out
        } else {
            self.hidden * self.n_in + self.hidden + self.n_out * self.hidden + self.n_out
        }
    }
}

/// Weights drawn uniformly from [-0.1, 0.1].
pub fn init_params(shape: NnShape, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..shape.n_params())
        .map(|_| rng.next_uniform(-0.1, 0.1))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

struct Layers<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

fn split(shape: NnShape, params: &[f64]) -> Layers<'_> {
    assert_eq!(params.len(), shape.n_params(), "parameter vector length");
    if shape.hidden == 0 {
        let (w, b) = params.split_at(shape.n_out * shape.n_in);
        Layers {
            w1: &[],
            b1: &[],
            w2: w,
            b2: b,
        }
    } else {
        let (w1, rest) = params.split_at(shape.hidden * shape.n_in);
        let (b1, rest) = rest.split_at(shape.hidden);
        let (w2, b2) = rest.split_at(shape.n_out * shape.hidden);
        Layers { w1, b1, w2, b2 }
    }
}

/// Forward pass for one sample: hidden activations (empty when hidden = 0)
/// and output class probabilities.
fn forward(shape: NnShape, l: &Layers, x: &[f64], hidden: &mut Vec<f64>, probs: &mut Vec<f64>) {
    hidden.clear();
    probs.clear();
    let input: &[f64] = if shape.hidden == 0 {
        x
    } else {
        for h in 0..shape.hidden {
            let row = &l.w1[h * shape.n_in..(h + 1) * shape.n_in];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + l.b1[h];
            hidden.push(sigmoid(z));
        }
        hidden
    };
    let in_dim = if shape.hidden == 0 {
        shape.n_in
    } else {
        shape.hidden
    };
    for c in 0..shape.n_out {
        let row = &l.w2[c * in_dim..(c + 1) * in_dim];
        let z: f64 = row.iter().zip(input).map(|(w, xi)| w * xi).sum::<f64>() + l.b2[c];
        probs.push(z);
    }
    softmax_in_place(probs);
}

/// Mean cross-entropy of the batch under the given parameters.
pub fn loss(shape: NnShape, params: &[f64], x: &Matrix, y: &[usize]) -> f64 {
    let l = split(shape, params);
    let mut hidden = Vec::with_capacity(shape.hidden);
    let mut probs = Vec::with_capacity(shape.n_out);
    let mut total = 0.0;
    for (row, &target) in x.iter_rows().zip(y) {
        forward(shape, &l, row, &mut hidden, &mut probs);
        total -= probs[target].max(1e-300).ln();
    }
    total / x.rows() as f64
}

/// Analytic gradient of [`loss`] with respect to the flat parameter vector.
pub fn gradient(shape: NnShape, params: &[f64], x: &Matrix, y: &[usize]) -> Vec<f64> {
    let l = split(shape, params);
    let mut grad = vec![0.0; params.len()];
    let in_dim = if shape.hidden == 0 {
        shape.n_in
    } else {
        shape.hidden
    };
    let w1_len = shape.hidden * shape.n_in;
    let w2_off = if shape.hidden == 0 {
        0
    } else {
        w1_len + shape.hidden
    };
    let b2_off = w2_off + shape.n_out * in_dim;

    let mut hidden = Vec::with_capacity(shape.hidden);
    let mut probs = Vec::with_capacity(shape.n_out);
    let m = x.rows() as f64;

    for (row, &target) in x.iter_rows().zip(y) {
        forward(shape, &l, row, &mut hidden, &mut probs);
        // d loss / d logits
        let mut dz2 = probs.clone();
        dz2[target] -= 1.0;
        let input: &[f64] = if shape.hidden == 0 { row } else { &hidden };
        for c in 0..shape.n_out {
            let g = dz2[c] / m;
            let w_row = &mut grad[w2_off + c * in_dim..w2_off + (c + 1) * in_dim];
            for (gw, xi) in w_row.iter_mut().zip(input) {
                *gw += g * xi;
            }
            grad[b2_off + c] += g;
        }
        if shape.hidden > 0 {
            for h in 0..shape.hidden {
                let mut dh = 0.0;
                for c in 0..shape.n_out {
                    dh += l.w2[c * in_dim + h] * dz2[c];
                }
                let dz1 = dh * hidden[h] * (1.0 - hidden[h]) / m;
                let w_row = &mut grad[h * shape.n_in..(h + 1) * shape.n_in];
                for (gw, xi) in w_row.iter_mut().zip(row) {
                    *gw += dz1 * xi;
                }
                grad[w1_len + h] += dz1;
            }
        }
    }
    grad
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct NnFit {
    pub shape: NnShape,
    pub params: Vec<f64>,
}

pub(crate) fn train(
    shape: NnShape,
    x: &Matrix,
    y_positions: &[usize],
    seed: u64,
    learning_rate: f64,
    epochs: usize,
) -> NnFit {
    let mut params = init_params(shape, seed);
    for _ in 0..epochs {
        let grad = gradient(shape, &params, x, y_positions);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
    }
    NnFit { shape, params }
}

impl NnFit {
    pub fn posteriors_one(&self, query: &[f64]) -> Vec<f64> {
        let l = split(self.shape, &self.params);
        let mut hidden = Vec::with_capacity(self.shape.hidden);
        let mut probs = Vec::with_capacity(self.shape.n_out);
        forward(self.shape, &l, query, &mut hidden, &mut probs);
        probs
    }

    /// Class position with the largest probability; ties break low.
    pub fn predict_position(&self, query: &[f64]) -> usize {
        let probs = self.posteriors_one(query);
        let mut best = 0;
        for (pos, p) in probs.iter().enumerate().skip(1) {
            if *p > probs[best] {
                best = pos;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch() -> (Matrix, Vec<usize>) {
        let x = Matrix::from_rows(&[
            vec![0.0, 1.0, -0.5],
            vec![1.0, -1.0, 0.25],
            vec![-0.7, 0.3, 0.9],
            vec![0.2, 0.1, -1.2],
        ]);
        (x, vec![0, 1, 2, 1])
    }

    fn check_gradient(shape: NnShape) {
        let (x, y) = toy_batch();
        let params = init_params(shape, 5);
        let grad = gradient(shape, &params, &x, &y);
        let mut rng = Rng::new(11);
        let eps = 1e-6;
        for _ in 0..20 {
            let i = rng.next_index(params.len());
            let mut plus = params.clone();
            plus[i] += eps;
            let mut minus = params.clone();
            minus[i] -= eps;
            let fd = (loss(shape, &plus, &x, &y) - loss(shape, &minus, &x, &y)) / (2.0 * eps);
            let denom = grad[i].abs().max(fd.abs()).max(1e-8);
            let rel = (grad[i] - fd).abs() / denom;
            assert!(rel <= 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_hidden() {
        check_gradient(NnShape {
            n_in: 3,
            hidden: 5,
            n_out: 3,
        });
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        check_gradient(NnShape {
            n_in: 3,
            hidden: 0,
            n_out: 3,
        });
    }

    #[test]
    fn learns_linearly_separable_toy() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.2, 0.1],
            vec![1.0, 1.0],
            vec![0.9, 1.1],
        ]);
        let y = vec![0, 0, 1, 1];
        let shape = NnShape {
            n_in: 2,
            hidden: 4,
            n_out: 2,
        };
        let fit = train(shape, &x, &y, 3, 0.5, 2000);
        for (row, &target) in x.iter_rows().zip(&y) {
            assert_eq!(fit.predict_position(row), target);
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (x, y) = toy_batch();
        let shape = NnShape {
            n_in: 3,
            hidden: 6,
            n_out: 3,
        };
        let a = train(shape, &x, &y, 9, 0.1, 50);
        let b = train(shape, &x, &y, 9, 0.1, 50);
        assert_eq!(a, b);
    }
}
