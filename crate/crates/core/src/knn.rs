//! Brute-force k-nearest-neighbor classification and the validation sweep over k.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::matrix::Matrix;
use crate::{Digit, NUM_DIGITS};

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("query has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k = {k} must be in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("{features} training rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("empty list of k values")]
    NoKValues,
}

/// Odd k from 1 through 29, the default sweep.
pub fn default_k_values() -> Vec<usize> {
    odd_k_values(29)
}

pub fn odd_k_values(k_max: usize) -> Vec<usize> {
    (1..=k_max).step_by(2).collect()
}

#[derive(Clone, Debug)]
pub struct KnnModel {
    train_features: Matrix,
    train_labels: Vec<Digit>,
    k: usize,
}

// Max-heap entry ordered by (distance, index): the root is the worst kept neighbor.
#[derive(PartialEq)]
struct Neighbor {
    dist: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl KnnModel {
    pub fn new(
        train_features: Matrix,
        train_labels: Vec<Digit>,
        k: usize,
    ) -> Result<Self, KnnError> {
        if train_features.rows() != train_labels.len() {
            return Err(KnnError::LengthMismatch {
                features: train_features.rows(),
                labels: train_labels.len(),
            });
        }
        let n = train_labels.len();
        if k == 0 || k > n {
            return Err(KnnError::InvalidK { k, n });
        }
        Ok(Self {
            train_features,
            train_labels,
            k,
        })
    }

    pub fn fit(train: &LabeledDataset, k: usize) -> Result<Self, KnnError> {
        Self::new(train.features().clone(), train.labels().to_vec(), k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training indices of the `k` nearest rows, nearest first; equal distances
    /// are ordered by lower index.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>, KnnError> {
        let d = self.train_features.cols();
        if x.len() != d {
            return Err(KnnError::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        for (index, row) in self.train_features.iter_rows().enumerate() {
            let dist: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let cand = Neighbor { dist, index };
            if heap.len() < self.k {
                heap.push(cand);
            } else if heap.peek().is_some_and(|worst| cand < *worst) {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|n| n.index)
            .collect())
    }

    /// Majority label among the k nearest rows; vote ties go to the smallest digit.
    pub fn predict(&self, x: &[f64]) -> Result<Digit, KnnError> {
        let mut votes = [0usize; NUM_DIGITS];
        for i in self.neighbors(x)? {
            votes[self.train_labels[i] as usize] += 1;
        }
        let best = *votes.iter().max().expect("ten classes");
        Ok(votes.iter().position(|&v| v == best).expect("max exists") as Digit)
    }

    pub fn predict_all(&self, features: &Matrix) -> Result<Vec<Digit>, KnnError> {
        features.iter_rows().map(|r| self.predict(r)).collect()
    }
}

/// Fraction of `data` whose predicted label matches.
pub fn accuracy(model: &KnnModel, data: &LabeledDataset) -> Result<f64, KnnError> {
    let preds = model.predict_all(data.features())?;
    let hits = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Outcome of [`sweep_k`].
#[derive(Clone, Debug, PartialEq)]
pub struct KSweep {
    pub best_k: usize,
    pub best_accuracy: f64,
    /// `(k, validation accuracy)` in the order the k values were given.
    pub accuracies: Vec<(usize, f64)>,
}

/// Validation accuracy for each k; the best is the first k reaching the maximum.
pub fn sweep_k(
    train: &LabeledDataset,
    val: &LabeledDataset,
    k_values: &[usize],
) -> Result<KSweep, KnnError> {
    if k_values.is_empty() {
        return Err(KnnError::NoKValues);
    }
    let mut accuracies = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let model = KnnModel::fit(train, k)?;
        accuracies.push((k, accuracy(&model, val)?));
    }
    let (best_k, best_accuracy) = accuracies
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, f64)>, (k, a)| match best {
            Some((_, ba)) if ba >= a => best,
            _ => Some((k, a)),
        })
        .expect("non-empty");
    Ok(KSweep {
        best_k,
        best_accuracy,
        accuracies,
    })
}
