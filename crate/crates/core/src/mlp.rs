//! Multi-layer perceptron: ReLU hidden layers, softmax output, cross-entropy
//! loss with an L2 weight penalty, trained full-batch by gradient descent with
//! Armijo backtracking.

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{dot, Matrix};
use crate::optim::{self, GdOptions, GdResult};
use crate::prng::SplitMix64;
use crate::svm::{argmax_first, present_classes};
use crate::Digit;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-15;
/// Consecutive small-improvement steps that end training.
pub const STALL_PATIENCE: usize = 5;
/// Samples per gradient work unit. Partial sums are combined in chunk order.
const CHUNK: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("training data needs at least two distinct labels")]
    SingleClass,
    #[error("feature matrix contains a non-finite value")]
    NonFiniteFeature,
    #[error("input has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {label} has no output unit (model has {classes})")]
    LabelOutOfRange { label: Digit, classes: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpHyper {
    pub hidden_sizes: Vec<usize>,
    /// L2 penalty strength.
    pub alpha: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![5, 2],
            alpha: 1e-5,
            seed: 1,
            tol: 1e-5,
            max_iter: 500,
        }
    }
}

impl MlpHyper {
    fn validate(&self) -> Result<(), MlpError> {
        if self.hidden_sizes.contains(&0) {
            return Err(MlpError::InvalidHyper(
                "hidden layer sizes must be positive".into(),
            ));
        }
        if [self.alpha, self.tol]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(MlpError::InvalidHyper(
                "alpha and tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Feed-forward network. Layer `l` maps `layer_sizes[l]` inputs to
/// `layer_sizes[l + 1]` outputs with a `fan_out × fan_in` weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl MlpModel {
    pub fn new(
        layer_sizes: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, MlpError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(MlpError::InvalidModel(
                "need at least input and output layers of positive size".into(),
            ));
        }
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(MlpError::InvalidModel(format!(
                "expected {layers} weight layers"
            )));
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].rows() != fan_out
                || weights[l].cols() != fan_in
                || biases[l].len() != fan_out
            {
                return Err(MlpError::InvalidModel(format!(
                    "layer {l} does not map {fan_in} -> {fan_out}"
                )));
            }
            if !weights[l].is_finite() || biases[l].iter().any(|b| !b.is_finite()) {
                return Err(MlpError::InvalidModel(format!(
                    "layer {l} has a non-finite parameter"
                )));
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    /// Glorot-uniform weights drawn from SplitMix64(seed) in layer order,
    /// row-major; zero biases.
    pub fn init(input_dim: usize, hyper: &MlpHyper, classes: usize) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&hyper.hidden_sizes);
        sizes.push(classes);
        let mut rng = SplitMix64::new(hyper.seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data));
            biases.push(vec![0.0; fan_out]);
        }
        Self::new(sizes, weights, biases).expect("consistent shapes")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols() + w.rows())
            .sum()
    }

    /// Parameters flattened as, per layer, the weight matrix (row-major) then
    /// the bias vector. Gradients use the same layout.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.rows() * w.cols();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let m = b.len();
            b.copy_from_slice(&flat[off..off + m]);
            off += m;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    // Pre-activations of every layer for one input.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z: Vec<f64> = {
                let input: Vec<f64>;
                let a: &[f64] = if l == 0 {
                    x
                } else {
                    input = zs[l - 1].iter().map(|&v| relu(v)).collect();
                    &input
                };
                w.iter_rows()
                    .zip(b)
                    .map(|(row, bi)| dot(row, a) + bi)
                    .collect()
            };
            zs.push(z);
            debug_assert!(l <= last);
        }
        zs
    }

    /// Output-layer logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(x)?;
        Ok(self.pre_activations(x).pop().expect("output layer"))
    }

    /// Class probabilities (softmax of the logits).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<Digit, MlpError> {
        Ok(argmax_first(&self.forward(x)?) as Digit)
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_data(model: &MlpModel, features: &Matrix, labels: &[Digit]) -> Result<(), MlpError> {
    if features.rows() != labels.len() {
        return Err(MlpError::LengthMismatch {
            features: features.rows(),
            labels: labels.len(),
        });
    }
    if features.cols() != model.input_dim() {
        return Err(MlpError::DimensionMismatch {
            expected: model.input_dim(),
            actual: features.cols(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= model.num_classes()) {
        return Err(MlpError::LabelOutOfRange {
            label: bad,
            classes: model.num_classes(),
        });
    }
    Ok(())
}

fn penalty(model: &MlpModel, alpha: f64, n: usize) -> f64 {
    alpha / (2.0 * n as f64) * model.weights.iter().map(Matrix::norm_sq).sum::<f64>()
}

// Summed negative log-likelihood (and optionally its gradient) over rows `range`.
fn nll_chunk(
    model: &MlpModel,
    features: &Matrix,
    labels: &[Digit],
    range: std::ops::Range<usize>,
    with_grad: bool,
) -> (f64, Vec<f64>) {
    let layers = model.weights.len();
    let mut grad = if with_grad {
        vec![0.0; model.num_params()]
    } else {
        Vec::new()
    };
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0;
    for w in &model.weights {
        offsets.push(off);
        off += w.rows() * w.cols() + w.rows();
    }
    let mut nll = 0.0;
    for i in range {
        let x = features.row(i);
        let zs = model.pre_activations(x);
        let probs = softmax(&zs[layers - 1]);
        let y = labels[i] as usize;
        nll -= probs[y].max(PROB_FLOOR).ln();
        if !with_grad {
            continue;
        }
        let mut delta = probs;
        delta[y] -= 1.0;
        for l in (0..layers).rev() {
            let w = &model.weights[l];
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                zs[l - 1].iter().map(|&v| relu(v)).collect()
            };
            let (fan_out, fan_in) = (w.rows(), w.cols());
            let base = offsets[l];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let g = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                    for (gj, aj) in g.iter_mut().zip(&input) {
                        *gj += d * aj;
                    }
                }
                grad[base + fan_out * fan_in + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (p, wj) in prev.iter_mut().zip(w.row(o)) {
                            *p += d * wj;
                        }
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&zs[l - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    (nll, grad)
}

fn chunked(
    model: &MlpModel,
    features: &Matrix,
    labels: &[Digit],
    with_grad: bool,
) -> (f64, Vec<f64>) {
    let n = features.rows();
    let parts: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            nll_chunk(
                model,
                features,
                labels,
                c * CHUNK..((c + 1) * CHUNK).min(n),
                with_grad,
            )
        })
        .collect();
    let mut total = 0.0;
    let mut grad = if with_grad {
        vec![0.0; model.num_params()]
    } else {
        Vec::new()
    };
    for (nll, g) in parts {
        total += nll;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

/// Mean cross-entropy plus `alpha/(2n)·Σ‖W‖²` (biases unpenalized).
pub fn loss(
    model: &MlpModel,
    features: &Matrix,
    labels: &[Digit],
    alpha: f64,
) -> Result<f64, MlpError> {
    check_data(model, features, labels)?;
    let n = features.rows();
    let (nll, _) = chunked(model, features, labels, false);
    Ok(nll / n as f64 + penalty(model, alpha, n))
}

/// Loss and its gradient by backpropagation, laid out like [`MlpModel::params_flat`].
pub fn loss_grad(
    model: &MlpModel,
    features: &Matrix,
    labels: &[Digit],
    alpha: f64,
) -> Result<(f64, Vec<f64>), MlpError> {
    check_data(model, features, labels)?;
    let n = features.rows();
    let nf = n as f64;
    let (nll, mut grad) = chunked(model, features, labels, true);
    grad.iter_mut().for_each(|g| *g /= nf);
    let mut off = 0;
    for w in &model.weights {
        for (g, wv) in grad[off..off + w.rows() * w.cols()]
            .iter_mut()
            .zip(w.as_slice())
        {
            *g += alpha / nf * wv;
        }
        off += w.rows() * w.cols() + w.rows();
    }
    Ok((nll / nf + penalty(model, alpha, n), grad))
}

#[derive(Clone, Debug)]
pub struct MlpFit {
    pub model: MlpModel,
    pub report: GdResult,
}

/// Trains from [`MlpModel::init`]. The output layer has `max(label) + 1` units
/// so that output index equals digit.
pub fn train_with_report(
    features: &Matrix,
    labels: &[Digit],
    hyper: &MlpHyper,
) -> Result<MlpFit, MlpError> {
    hyper.validate()?;
    if features.rows() != labels.len() {
        return Err(MlpError::LengthMismatch {
            features: features.rows(),
            labels: labels.len(),
        });
    }
    if !features.is_finite() {
        return Err(MlpError::NonFiniteFeature);
    }
    let classes = present_classes(labels);
    if classes.len() < 2 {
        return Err(MlpError::SingleClass);
    }
    let num_classes = *classes.last().expect("non-empty") as usize + 1;
    let mut model = MlpModel::init(features.cols(), hyper, num_classes);
    check_data(&model, features, labels)?;
    let opts = GdOptions {
        tol: hyper.tol,
        max_iter: hyper.max_iter,
        stall_patience: Some(STALL_PATIENCE),
    };
    let mut scratch = model.clone();
    let mut scratch2 = model.clone();
    let report = optim::minimize(
        model.params_flat(),
        &opts,
        |p| {
            scratch.set_params_flat(p);
            loss_grad(&scratch, features, labels, hyper.alpha).expect("validated shapes")
        },
        |p| {
            scratch2.set_params_flat(p);
            loss(&scratch2, features, labels, hyper.alpha).expect("validated shapes")
        },
    );
    model.set_params_flat(&report.params);
    Ok(MlpFit { model, report })
}

pub fn train(features: &Matrix, labels: &[Digit], hyper: &MlpHyper) -> Result<MlpModel, MlpError> {
    train_with_report(features, labels, hyper).map(|f| f.model)
}
