//! Mini-batch training loop with seeded shuffling and per-epoch history.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::Network;
use super::ops::{Loss, Target};
use super::{NnError, Tensor};

/// One supervised example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub target: Target,
}

impl Example {
    pub fn new(input: Tensor, target: Target) -> Self {
        Example { input, target }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: Loss,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 180,
            batch_size: 16,
            lr: adam.lr,
            seed: 1,
            loss: Loss::CrossEntropy,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(NnError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example loss over the epoch, measured before each batch update.
    pub loss: f64,
    /// Classification accuracy over the same examples; `None` for regression.
    pub accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,loss,accuracy` rows; accuracy is left blank for regressors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for r in &self.records {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", r.epoch, r.loss, acc);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("epoch,loss,accuracy") {
            return Err(NnError::Persist("history csv header".into()));
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || NnError::Persist(format!("history csv line {}", n + 2));
            let mut parts = line.split(',');
            let epoch = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let loss = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let accuracy = match parts.next() {
                Some("") | None => None,
                Some(s) => Some(s.parse().map_err(|_| bad())?),
            };
            records.push(EpochRecord {
                epoch,
                loss,
                accuracy,
                val_loss: None,
                val_accuracy: None,
            });
        }
        Ok(TrainingHistory { records })
    }
}

fn check_examples(net: &Network, data: &[Example], loss: Loss) -> Result<(), NnError> {
    let out_len: usize = net.output_shape().iter().product();
    for ex in data {
        if ex.input.shape() != net.input_shape() {
            return Err(NnError::ShapeMismatch {
                layer: "input".into(),
                reason: format!("expected {:?}, got {:?}", net.input_shape(), ex.input.shape()),
            });
        }
        match (&ex.target, loss) {
            (Target::Class(c), Loss::CrossEntropy) if *c >= out_len => {
                return Err(NnError::IndexOutOfRange {
                    index: *c,
                    len: out_len,
                })
            }
            (Target::Class(_), Loss::CrossEntropy) => {}
            (Target::Values(v), Loss::MeanSquaredError) if v.len() != out_len => {
                return Err(NnError::InvalidShape(format!(
                    "target has {} values, output has {out_len}",
                    v.len()
                )))
            }
            (Target::Values(_), Loss::MeanSquaredError) => {}
            (t, l) => {
                return Err(NnError::InvalidConfig(format!("{l:?} loss cannot use target {t:?}")))
            }
        }
    }
    Ok(())
}

fn is_hit(output: &Tensor, target: &Target) -> Option<bool> {
    target.class().map(|c| output.argmax() == Some(c))
}

/// Mean loss and (for class targets) accuracy of `net` over `data`.
pub fn evaluate(net: &Network, data: &[Example], loss: Loss) -> Result<(f64, Option<f64>), NnError> {
    if data.is_empty() {
        return Err(NnError::Empty("evaluation set"));
    }
    check_examples(net, data, loss)?;
    let mut total = 0.0;
    let mut hits = 0usize;
    let mut classified = true;
    for ex in data {
        let out = net.predict(&ex.input)?;
        total += loss.value(&out, &ex.target)?;
        match is_hit(&out, &ex.target) {
            Some(h) => hits += usize::from(h),
            None => classified = false,
        }
    }
    let n = data.len() as f64;
    Ok((total / n, classified.then(|| hits as f64 / n)))
}

/// Trains `net` in place with Adam and returns one record per epoch.
///
/// Examples are visited in an order shuffled by `config.seed` at the start
/// of every epoch; the final partial batch is kept. Batch gradients are the
/// mean over the batch, accumulated in visiting order.
pub fn train(
    net: &mut Network,
    data: &[Example],
    config: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<TrainingHistory, NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::Empty("training set"));
    }
    check_examples(net, data, config.loss)?;
    if let Some(v) = validation {
        check_examples(net, v, config.loss)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.adam(), net.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut hits = 0usize;
        let mut classified = true;

        for batch in order.chunks(config.batch_size) {
            let mut sum: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            for &i in batch {
                let ex = &data[i];
                let acts = net.forward(&ex.input)?;
                match is_hit(acts.output(), &ex.target) {
                    Some(h) => hits += usize::from(h),
                    None => classified = false,
                }
                let grads = net.backward(&acts, &ex.target, config.loss)?;
                epoch_loss += grads.loss;
                for (s, g) in sum.iter_mut().zip(&grads.params) {
                    s.add_assign(g);
                }
            }
            let k = 1.0 / batch.len() as f64;
            for s in &mut sum {
                s.scale(k);
            }
            adam.step(net.params_mut(), &sum)?;
        }

        let n = data.len() as f64;
        let (val_loss, val_accuracy) = match validation {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate(net, v, config.loss)?;
                (Some(l), a)
            }
            _ => (None, None),
        };
        history.records.push(EpochRecord {
            epoch,
            loss: epoch_loss / n,
            accuracy: classified.then(|| hits as f64 / n),
            val_loss,
            val_accuracy,
        });
        log::debug!("epoch {epoch}: loss {:.6}", epoch_loss / n);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::LayerSpec;

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert_eq!(c.epochs, 180);
        assert!(c.validate().is_ok());
        c.epochs = 0;
        assert!(c.validate().is_err());
        c = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_csv_roundtrip() {
        let h = TrainingHistory {
            records: vec![
                EpochRecord { epoch: 1, loss: 0.5, accuracy: Some(0.25), val_loss: None, val_accuracy: None },
                EpochRecord { epoch: 2, loss: 0.25, accuracy: None, val_loss: None, val_accuracy: None },
            ],
        };
        let csv = h.to_csv();
        assert_eq!(csv, "epoch,loss,accuracy\n1,0.5,0.25\n2,0.25,\n");
        assert_eq!(TrainingHistory::from_csv(&csv).unwrap(), h);
    }

    #[test]
    fn rejects_bad_datasets() {
        let mut net = Network::new(&[2], vec![LayerSpec::dense(2, 2), LayerSpec::Softmax], 0).unwrap();
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(&mut net, &[], &cfg, None), Err(NnError::Empty(_))));
        let bad = [Example::new(Tensor::vector(&[0.0, 1.0]), Target::Class(5))];
        assert!(matches!(
            train(&mut net, &bad, &cfg, None),
            Err(NnError::IndexOutOfRange { index: 5, .. })
        ));
    }
}
