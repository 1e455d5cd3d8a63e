//! Activation functions, losses and the accuracy metric.

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Probabilities are clamped to this floor before taking the log.
pub const CROSS_ENTROPY_CLIP: f64 = 1e-12;

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Numerically stable softmax over a rank-1 tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    if logits.is_empty() {
        return Err(NnError::Empty("softmax input"));
    }
    if logits.shape().len() != 1 {
        return Err(NnError::InvalidShape(format!(
            "softmax expects a rank-1 tensor, got {:?}",
            logits.shape()
        )));
    }
    if !logits.is_finite() {
        return Err(NnError::NonFinite("softmax input"));
    }
    Ok(Tensor::vector(&softmax_slice(logits.data())))
}

pub(crate) fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(probs[target])`, with the probability clamped at [`CROSS_ENTROPY_CLIP`].
pub fn cross_entropy(probs: &Tensor, target_class: usize) -> Result<f64, NnError> {
    let p = probs
        .data()
        .get(target_class)
        .ok_or(NnError::IndexOutOfRange {
            index: target_class,
            len: probs.len(),
        })?;
    Ok(-p.max(CROSS_ENTROPY_CLIP).ln())
}

/// Mean squared error over all entries.
pub fn mean_squared_error(output: &[f64], target: &[f64]) -> Result<f64, NnError> {
    if output.len() != target.len() {
        return Err(NnError::InvalidShape(format!(
            "output has {} values, target has {}",
            output.len(),
            target.len()
        )));
    }
    if output.is_empty() {
        return Err(NnError::Empty("mse input"));
    }
    Ok(output
        .iter()
        .zip(target)
        .map(|(o, t)| (o - t).powi(2))
        .sum::<f64>()
        / output.len() as f64)
}

/// Fraction of positions where prediction and truth agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64, NnError> {
    if predictions.len() != truth.len() {
        return Err(NnError::InvalidShape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(NnError::Empty("accuracy input"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Categorical cross-entropy against a class index.
    CrossEntropy,
    /// Mean squared error against a value vector.
    MeanSquaredError,
}

/// Supervision for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

impl Target {
    pub fn class(&self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(*c),
            Target::Values(_) => None,
        }
    }
}

impl Loss {
    pub fn value(self, output: &Tensor, target: &Target) -> Result<f64, NnError> {
        match (self, target) {
            (Loss::CrossEntropy, Target::Class(c)) => cross_entropy(output, *c),
            (Loss::MeanSquaredError, Target::Values(v)) => mean_squared_error(output.data(), v),
            _ => Err(NnError::InvalidConfig(format!(
                "{self:?} loss cannot use target {target:?}"
            ))),
        }
    }

    /// Gradient of the loss with respect to the network output.
    pub(crate) fn output_gradient(self, output: &Tensor, target: &Target) -> Result<Tensor, NnError> {
        let mut g = Tensor::zeros(output.shape());
        match (self, target) {
            (Loss::CrossEntropy, Target::Class(c)) => {
                let p = *output.data().get(*c).ok_or(NnError::IndexOutOfRange {
                    index: *c,
                    len: output.len(),
                })?;
                // Zero slope once the clamp is active.
                if p > CROSS_ENTROPY_CLIP {
                    g.data_mut()[*c] = -1.0 / p;
                }
            }
            (Loss::MeanSquaredError, Target::Values(v)) => {
                if v.len() != output.len() {
                    return Err(NnError::InvalidShape(format!(
                        "output has {} values, target has {}",
                        output.len(),
                        v.len()
                    )));
                }
                let k = 2.0 / v.len() as f64;
                for ((gi, o), t) in g.data_mut().iter_mut().zip(output.data()).zip(v) {
                    *gi = k * (o - t);
                }
            }
            _ => {
                return Err(NnError::InvalidConfig(format!(
                    "{self:?} loss cannot use target {target:?}"
                )))
            }
        }
        Ok(g)
    }
}
