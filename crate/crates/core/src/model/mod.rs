//! Binary logistic regression written out by hand: forward pass, cross-entropy loss,
//! analytic gradient, SGD step, and evaluation.

mod checkpoint;
mod train;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EmbeddingVector, LabeledExample};

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use train::{
    embed_sequential, fit, train_single, BatchSchedule, DataSource, Hyperparams, TrainOutcome,
};
pub(crate) use train::{embed_shard, prepare, preprocess_shard};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("validation split is empty ({total} examples, train fraction {fraction})")]
    EmptyValidation { total: usize, fraction: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn zeros(dimension: usize) -> Self {
        Self { weights: vec![0.0; dimension], bias: 0.0 }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Largest relative difference over all coordinates, `|a-b| / max(|a|, |b|)`,
    /// treating two zeros as equal.
    pub fn max_relative_diff(&self, other: &ModelParams) -> f64 {
        self.weights
            .iter()
            .chain(std::iter::once(&self.bias))
            .zip(other.weights.iter().chain(std::iter::once(&other.bias)))
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dimension() {
            return Err(ModelError::DimensionMismatch { expected: self.dimension(), found });
        }
        Ok(())
    }

    #[inline]
    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }
}

/// Mean gradient over `example_count` examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub d_weights: Vec<f64>,
    pub d_bias: f64,
    pub example_count: usize,
}

impl GradientVector {
    pub fn dimension(&self) -> usize {
        self.d_weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.d_bias.is_finite() && self.d_weights.iter().all(|g| g.is_finite())
    }
}

/// 2x2 confusion counts, rows = true label, columns = predicted label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_positive: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }

    pub fn correct(&self) -> u64 {
        self.true_negative + self.true_positive
    }

    fn tally(&mut self, label: u8, predicted: u8) {
        match (label, predicted) {
            (0, 0) => self.true_negative += 1,
            (0, _) => self.false_positive += 1,
            (_, 0) => self.false_negative += 1,
            _ => self.true_positive += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.true_negative += other.true_negative;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
        self.true_positive += other.true_positive;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let total = confusion.total();
        let correct = confusion.correct();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { accuracy, correct, total, confusion }
    }
}

/// Logistic function without overflow for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn forward(params: &ModelParams, x: &EmbeddingVector) -> Result<f64> {
    params.check_dim(x.dimension())?;
    Ok(sigmoid(params.logit(x.values())))
}

fn l2_penalty(params: &ModelParams, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    0.5 * l2 * params.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Mean binary cross-entropy plus `(l2 / 2) * |w|^2`.
pub fn batch_loss(params: &ModelParams, batch: &[LabeledExample], l2: f64) -> Result<f64> {
    let refs: Vec<&LabeledExample> = batch.iter().collect();
    batch_loss_refs(params, &refs, l2)
}

pub(crate) fn batch_loss_refs(params: &ModelParams, batch: &[&LabeledExample], l2: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut sum = 0.0;
    for ex in batch {
        params.check_dim(ex.x().len())?;
        let z = params.logit(ex.x());
        // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z
        sum += softplus(z) - ex.y() * z;
    }
    Ok(sum / batch.len() as f64 + l2_penalty(params, l2))
}

/// Forward half of the gradient: writes `σ(w·x + b) - y` per example into `out`.
pub(crate) fn residuals(params: &ModelParams, batch: &[&LabeledExample], out: &mut Vec<f64>) -> Result<()> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    out.clear();
    for ex in batch {
        params.check_dim(ex.x().len())?;
        out.push(sigmoid(params.logit(ex.x())) - ex.y());
    }
    Ok(())
}

/// Backward half: mean of `residual * x`, plus `l2 * w`.
pub(crate) fn accumulate_gradient(
    params: &ModelParams,
    batch: &[&LabeledExample],
    residuals: &[f64],
    l2: f64,
) -> GradientVector {
    let d = params.dimension();
    let mut d_weights = vec![0.0; d];
    let mut d_bias = 0.0;
    for (ex, &r) in batch.iter().zip(residuals) {
        for (g, x) in d_weights.iter_mut().zip(ex.x()) {
            *g += r * x;
        }
        d_bias += r;
    }
    let inv = 1.0 / batch.len() as f64;
    for (g, w) in d_weights.iter_mut().zip(&params.weights) {
        *g = *g * inv + l2 * w;
    }
    GradientVector { d_weights, d_bias: d_bias * inv, example_count: batch.len() }
}

pub(crate) fn batch_gradient_refs(
    params: &ModelParams,
    batch: &[&LabeledExample],
    l2: f64,
) -> Result<GradientVector> {
    let mut r = Vec::with_capacity(batch.len());
    residuals(params, batch, &mut r)?;
    Ok(accumulate_gradient(params, batch, &r, l2))
}

pub fn batch_gradient(params: &ModelParams, batch: &[LabeledExample], l2: f64) -> Result<GradientVector> {
    let refs: Vec<&LabeledExample> = batch.iter().collect();
    batch_gradient_refs(params, &refs, l2)
}

pub fn sgd_step(params: &ModelParams, grad: &GradientVector, lr: f64) -> Result<ModelParams> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grad, lr)?;
    Ok(next)
}

pub(crate) fn sgd_step_in_place(params: &mut ModelParams, grad: &GradientVector, lr: f64) -> Result<()> {
    params.check_dim(grad.dimension())?;
    for (w, g) in params.weights.iter_mut().zip(&grad.d_weights) {
        *w -= lr * g;
    }
    params.bias -= lr * grad.d_bias;
    Ok(())
}

/// Predicts 1 iff `forward >= 0.5`.
pub fn predict(params: &ModelParams, x: &[f64]) -> u8 {
    u8::from(sigmoid(params.logit(x)) >= 0.5)
}

pub fn evaluate(params: &ModelParams, dataset: &[LabeledExample]) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Ok(Metrics::from_confusion(confusion(params, dataset)?))
}

/// Confusion counts over `dataset`; empty input gives all zeros.
pub(crate) fn confusion(params: &ModelParams, dataset: &[LabeledExample]) -> Result<Confusion> {
    let mut c = Confusion::default();
    for ex in dataset {
        params.check_dim(ex.x().len())?;
        c.tally(ex.label, predict(params, ex.x()));
    }
    Ok(c)
}

/// `ceil(fraction * n)`, ignoring floating-point noise just above an integer.
pub fn train_len(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let len = if (x - nearest).abs() <= 1e-9 * (n.max(1) as f64) { nearest } else { x.ceil() };
    (len.max(0.0) as usize).min(n)
}

/// Seeded shuffle, then the first `ceil(fraction * n)` items go to training.
pub fn split<T>(mut dataset: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ModelError::InvalidHyperparams(format!("train_fraction {fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset.shuffle(&mut rng);
    let validation = dataset.split_off(train_len(dataset.len(), fraction));
    Ok((dataset, validation))
}
