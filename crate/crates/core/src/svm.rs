//! One-vs-rest linear SVM trained on the L2-regularized squared hinge loss.
//!
//! Each binary machine minimizes
//!
//! ```text
//! ½‖w‖² + C · Σᵢ max(0, 1 − yᵢ (w·xᵢ + b))²
//! ```
//!
//! with an unregularized bias, by full-batch gradient descent with Armijo
//! backtracking starting from w = 0, b = 0.

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{dot, Matrix};
use crate::optim::{self, GdOptions, GdResult};
use crate::Digit;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training data needs at least two distinct labels")]
    SingleClass,
    #[error("feature matrix contains a non-finite value")]
    NonFiniteFeature,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("input has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmHyper {
    /// Penalty on the squared hinge term.
    pub c: f64,
    /// Gradient-norm stopping tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
        }
    }
}

impl SvmHyper {
    fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.tol > 0.0 && self.max_iter >= 1) {
            return Err(SvmError::InvalidHyper(format!(
                "need c > 0, tol > 0, max_iter >= 1 (got c={}, tol={}, max_iter={})",
                self.c, self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// One weight row and bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmModel {
    weights: Matrix,
    biases: Vec<f64>,
    class_ids: Vec<Digit>,
}

impl LinearSvmModel {
    pub fn new(weights: Matrix, biases: Vec<f64>, class_ids: Vec<Digit>) -> Result<Self, SvmError> {
        if weights.rows() != biases.len() || biases.len() != class_ids.len() {
            return Err(SvmError::InvalidModel(
                "weights, biases and classes disagree in count".into(),
            ));
        }
        if class_ids.len() < 2 {
            return Err(SvmError::InvalidModel("need at least two classes".into()));
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(SvmError::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self {
            weights,
            biases,
            class_ids,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn class_ids(&self) -> &[Digit] {
        &self.class_ids
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// `w_c · x + b_c` for every class.
    pub fn decision(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    /// Class with the highest score; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<Digit, SvmError> {
        Ok(self.class_ids[argmax_first(&self.decision(x)?)])
    }
}

/// Index of the first maximal element.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Squared-hinge objective of one binary machine. `params` is `[w…, b]`,
/// `targets` holds ±1.
pub fn binary_objective(features: &Matrix, targets: &[f64], c: f64, params: &[f64]) -> f64 {
    let (w, b) = params.split_at(features.cols());
    let hinge: f64 = features
        .iter_rows()
        .zip(targets)
        .map(|(x, &y)| {
            let m = 1.0 - y * (dot(w, x) + b[0]);
            if m > 0.0 {
                m * m
            } else {
                0.0
            }
        })
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// Objective and gradient of one binary machine.
pub fn binary_objective_grad(
    features: &Matrix,
    targets: &[f64],
    c: f64,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let d = features.cols();
    let (w, b) = params.split_at(d);
    let mut grad = Vec::with_capacity(d + 1);
    grad.extend_from_slice(w);
    grad.push(0.0);
    let mut hinge = 0.0;
    for (x, &y) in features.iter_rows().zip(targets) {
        let m = 1.0 - y * (dot(w, x) + b[0]);
        if m > 0.0 {
            hinge += m * m;
            let coef = -2.0 * c * y * m;
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g += coef * xi;
            }
            grad[d] += coef;
        }
    }
    (0.5 * dot(w, w) + c * hinge, grad)
}

/// Trains one binary machine from zero.
pub fn train_binary(features: &Matrix, targets: &[f64], hyper: &SvmHyper) -> GdResult {
    let opts = GdOptions {
        tol: hyper.tol,
        max_iter: hyper.max_iter,
        stall_patience: None,
    };
    optim::minimize(
        vec![0.0; features.cols() + 1],
        &opts,
        |p| binary_objective_grad(features, targets, hyper.c, p),
        |p| binary_objective(features, targets, hyper.c, p),
    )
}

/// Distinct labels in ascending order.
pub fn present_classes(labels: &[Digit]) -> Vec<Digit> {
    let mut seen = [false; 256];
    labels.iter().for_each(|&l| seen[l as usize] = true);
    (0..=255u8).filter(|&l| seen[l as usize]).collect()
}

/// Result of one-vs-rest training: the model plus per-class optimizer reports.
#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: LinearSvmModel,
    pub machines: Vec<GdResult>,
}

/// Trains one binary machine per class present in `labels`. The machines are
/// independent and are solved in parallel; results do not depend on scheduling.
pub fn train_with_report(
    features: &Matrix,
    labels: &[Digit],
    hyper: &SvmHyper,
) -> Result<SvmFit, SvmError> {
    hyper.validate()?;
    if features.rows() != labels.len() {
        return Err(SvmError::LengthMismatch {
            features: features.rows(),
            labels: labels.len(),
        });
    }
    if !features.is_finite() {
        return Err(SvmError::NonFiniteFeature);
    }
    let classes = present_classes(labels);
    if classes.len() < 2 {
        return Err(SvmError::SingleClass);
    }
    let machines: Vec<GdResult> = classes
        .par_iter()
        .map(|&class| {
            let targets: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            train_binary(features, &targets, hyper)
        })
        .collect();
    let d = features.cols();
    let mut weights = Matrix::zeros(classes.len(), d);
    let mut biases = Vec::with_capacity(classes.len());
    for (i, m) in machines.iter().enumerate() {
        weights.row_mut(i).copy_from_slice(&m.params[..d]);
        biases.push(m.params[d]);
    }
    Ok(SvmFit {
        model: LinearSvmModel::new(weights, biases, classes)?,
        machines,
    })
}

pub fn train(
    features: &Matrix,
    labels: &[Digit],
    hyper: &SvmHyper,
) -> Result<LinearSvmModel, SvmError> {
    train_with_report(features, labels, hyper).map(|f| f.model)
}
