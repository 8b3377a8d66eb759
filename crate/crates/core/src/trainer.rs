//! Cross-entropy training with AdamW, and evaluation.
//!
//! A run is a pure function of its configs, seed and data: initialization,
//! epoch shuffles and dropout masks each draw from their own seeded stream.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::dataset::{batch_indices, WindowSet};
use crate::error::{Error, Result};
use crate::model::{seeded, HiWaveModel, ModelConfig, ModelRng, DROPOUT_STREAM, SHUFFLE_STREAM};
use crate::optim::{clip_grad_norm, AdamW, AdamWConfig};
use crate::tensor::Tensor;
use crate::tokenizer::TokenizerConfig;

/// Which test accuracy a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracySelection {
    /// Accuracy after the last epoch.
    Final,
    /// Highest per-epoch test accuracy (optimistic; evaluates every epoch).
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    /// Global gradient-norm bound; off by default.
    pub clip: Option<f64>,
    pub selection: AccuracySelection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            epochs: 30,
            lr: adam.lr,
            batch_size: 64,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            seeds: vec![0, 1, 2, 3, 4],
            clip: None,
            selection: AccuracySelection::Final,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("seeds {:?} are not distinct", self.seeds)));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "lr must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Everything a finished run reports except wall time and config snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    /// Loss of the very first training batch.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
    pub test_accuracy: f64,
    pub learned_p: Vec<f64>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Mean cross-entropy of `logits[B, C]` against `labels`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    Ok(g.cross_entropy(logits, labels)?)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode accuracy and confusion matrix, in data order.
pub fn evaluate(model: &HiWaveModel, data: &WindowSet, batch_size: usize) -> Result<Evaluation> {
    let classes = model.model_config().n_classes;
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut predictions = Vec::with_capacity(data.len());
    for idx in batch_indices(data.len(), batch_size, None) {
        let (x, labels) = data.gather(&idx);
        let logits = model.logits(&x)?;
        for (row, &label) in logits.data().chunks_exact(classes).zip(&labels) {
            let pred = argmax(row);
            if label >= classes {
                return Err(crate::error::TensorError::LabelOutOfRange { label, classes }.into());
            }
            confusion[label][pred] += 1;
            predictions.push(pred);
        }
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = if data.is_empty() {
        0.0
    } else {
        correct as f64 / data.len() as f64
    };
    Ok(Evaluation {
        accuracy,
        predictions,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
    pub batch: usize,
}

/// Optimizer state and RNG streams for one run.
pub struct Trainer {
    model: HiWaveModel,
    opt: AdamW,
    cfg: TrainConfig,
    seed: u64,
    shuffle_rng: ModelRng,
    dropout_rng: ModelRng,
    epochs_done: usize,
    grad_seen: Vec<bool>,
}

impl Trainer {
    pub fn new(model: HiWaveModel, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let opt = AdamW::new(cfg.adamw(), model.params());
        let grad_seen = vec![false; model.params().len()];
        Ok(Self {
            model,
            opt,
            cfg,
            seed,
            shuffle_rng: seeded(seed, SHUFFLE_STREAM),
            dropout_rng: seeded(seed, DROPOUT_STREAM),
            epochs_done: 0,
            grad_seen,
        })
    }

    pub fn model(&self) -> &HiWaveModel {
        &self.model
    }

    pub fn into_model(self) -> HiWaveModel {
        self.model
    }

    /// Per parameter: whether any step so far produced a nonzero gradient.
    pub fn gradient_coverage(&self) -> impl Iterator<Item = (&str, bool)> {
        self.model
            .params()
            .iter()
            .zip(&self.grad_seen)
            .map(|(p, &seen)| (p.name.as_str(), seen))
    }

    /// Loss and parameter gradients for one batch without updating anything.
    pub fn gradients(
        model: &HiWaveModel,
        windows: &Tensor,
        labels: &[usize],
        dropout: Option<&mut ModelRng>,
    ) -> Result<(f64, usize, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let (logits, bound) = model.forward(&mut g, windows, dropout)?;
        let classes = model.model_config().n_classes;
        let correct = g
            .value(logits)
            .data()
            .chunks_exact(classes)
            .zip(labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
        let loss = cross_entropy(&mut g, logits, labels)?;
        let loss_value = g.value(loss).data()[0];
        g.backward(loss)?;
        Ok((loss_value, correct, model.params().gradients(&g, &bound)))
    }

    /// Forward, backward and one AdamW update on a batch.
    pub fn step(&mut self, windows: &Tensor, labels: &[usize], batch_index: usize) -> Result<StepStats> {
        let rng = (self.model.model_config().dropout > 0.0).then_some(&mut self.dropout_rng);
        let (loss, correct, mut grads) = Self::gradients(&self.model, windows, labels, rng)?;
        let non_finite = |param: &str| Error::NonFinite {
            param: param.into(),
            seed: self.seed,
            epoch: self.epochs_done + 1,
            batch: batch_index,
        };
        if !loss.is_finite() {
            return Err(non_finite("loss"));
        }
        for ((p, g), seen) in self.model.params().iter().zip(&grads).zip(&mut self.grad_seen) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(non_finite(&p.name));
            }
            *seen |= g.iter().any(|v| *v != 0.0);
        }
        if let Some(max_norm) = self.cfg.clip {
            clip_grad_norm(&mut grads, max_norm);
        }
        self.opt.step(self.model.params_mut(), &grads);
        Ok(StepStats {
            loss,
            correct,
            batch: labels.len(),
        })
    }

    /// One shuffled pass over `train`. `first_loss` receives the loss of the
    /// first batch.
    pub fn run_epoch(&mut self, train: &WindowSet, mut first_loss: Option<&mut f64>) -> Result<EpochStats> {
        let batches = batch_indices(train.len(), self.cfg.batch_size, Some(&mut self.shuffle_rng));
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (i, idx) in batches.iter().enumerate() {
            let (x, labels) = train.gather(idx);
            let s = self.step(&x, &labels, i + 1)?;
            if let Some(slot) = first_loss.take() {
                *slot = s.loss;
            }
            loss_sum += s.loss * s.batch as f64;
            correct += s.correct;
            seen += s.batch;
        }
        self.epochs_done += 1;
        Ok(EpochStats {
            epoch: self.epochs_done,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            test_accuracy: None,
        })
    }
}

/// Trains one model from scratch and evaluates it on `test`.
///
/// `on_epoch` sees every epoch as it finishes.
#[allow(clippy::too_many_arguments)]
pub fn train_one(
    model_cfg: &ModelConfig,
    tok_cfg: &TokenizerConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    train: &WindowSet,
    test: &WindowSet,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(HiWaveModel, RunMetrics)> {
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let model = HiWaveModel::build(model_cfg.clone(), tok_cfg.clone(), seed)?;
    let param_count = model.count_parameters();
    let mut trainer = Trainer::new(model, train_cfg.clone(), seed)?;
    let mut initial_loss = f64::NAN;
    let mut epochs = Vec::with_capacity(train_cfg.epochs);
    let mut best = f64::NEG_INFINITY;
    for e in 0..train_cfg.epochs {
        let first = (e == 0).then_some(&mut initial_loss);
        let mut stats = trainer.run_epoch(train, first)?;
        if train_cfg.selection == AccuracySelection::Best {
            let acc = evaluate(trainer.model(), test, train_cfg.batch_size)?.accuracy;
            best = best.max(acc);
            stats.test_accuracy = Some(acc);
        }
        on_epoch(&stats);
        epochs.push(stats);
    }
    let model = trainer.into_model();
    let test_accuracy = match train_cfg.selection {
        AccuracySelection::Final => evaluate(&model, test, train_cfg.batch_size)?.accuracy,
        AccuracySelection::Best => best,
    };
    let metrics = RunMetrics {
        seed,
        initial_loss,
        epochs,
        test_accuracy,
        learned_p: model.learned_exponents(),
        param_count,
    };
    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let dup = TrainConfig {
            seeds: vec![1, 2, 1],
            ..TrainConfig::default()
        };
        assert!(dup.validate().is_err());
        let none = TrainConfig {
            seeds: vec![],
            ..TrainConfig::default()
        };
        assert!(none.validate().is_err());
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn uniform_logits_give_log_six() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[2, 6]));
        let l = cross_entropy(&mut g, z, &[1, 4]).unwrap();
        assert!((g.value(l).data()[0] - 1.791_759_469_228_055).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, -1.0]), 1);
    }
}
