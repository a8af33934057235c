//! k-nearest-neighbor classification.
//!
//! Distance ties break toward the smaller training index and vote ties
//! toward the smaller class id, so predictions are reproducible on grids
//! and duplicated points.

use std::cmp::Ordering;

use crate::matrix::{squared_distance, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct KnnFit {
    pub k: usize,
    pub train: Matrix,
    pub labels: Vec<usize>,
}

fn nearer(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Labels of the `k` nearest training points to `query`, nearest first.
pub(crate) fn nearest_labels(
    train: &Matrix,
    labels: &[usize],
    query: &[f64],
    k: usize,
) -> Vec<usize> {
    let n = train.rows();
    let k = k.min(n);
    let mut cand: Vec<(f64, usize)> = (0..n)
        .map(|i| (squared_distance(train.row(i), query), i))
        .collect();
    if k < n {
        cand.select_nth_unstable_by(k - 1, nearer);
        cand.truncate(k);
    }
    cand.sort_unstable_by(nearer);
    cand.into_iter().map(|(_, i)| labels[i]).collect()
}

/// Majority vote; ties break to the smallest class id.
pub(crate) fn vote(neighbor_labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &l in neighbor_labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

impl KnnFit {
    pub fn predict_one(&self, query: &[f64], n_classes: usize) -> usize {
        let labels = nearest_labels(&self.train, &self.labels, query, self.k);
        vote(&labels, n_classes)
    }
}
