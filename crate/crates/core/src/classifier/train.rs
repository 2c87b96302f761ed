use std::fmt::Write as _;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Dense, EncodedPatch, Gradients, PointSetModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 16,
            epochs: 300,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.weight_decay < 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "learning rate and batch size must be positive, epochs at least 1",
            ));
        }
        Ok(())
    }
}

/// Cosine decay from `base` at epoch 0 to 0 at epoch `total`.
pub fn cosine_lr(base: f64, epoch: usize, total: usize) -> f64 {
    base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_train_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    /// `epoch,train_loss,train_acc,val_acc`; val_acc is empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_acc\n");
        for e in &self.epochs {
            let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.8},{:.6},{}", e.epoch, e.train_loss, e.train_acc, val);
        }
        out
    }
}

struct AdamW {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl AdamW {
    fn new(model: &PointSetModel) -> Self {
        AdamW { m: model.zero_gradients(), v: model.zero_gradients(), step: 0 }
    }

    fn update(&mut self, model: &mut PointSetModel, grads: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let decay = 1.0 - lr * cfg.weight_decay;
        let ms = self.m.point_layers.iter_mut().chain(self.m.head_layers.iter_mut());
        let vs = self.v.point_layers.iter_mut().chain(self.v.head_layers.iter_mut());
        for (((layer, g), m), v) in model.layers_mut().zip(grads.layers()).zip(ms).zip(vs) {
            step_tensor(layer, g, m, v, lr, decay, bc1, bc2, cfg);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn step_tensor(
    layer: &mut Dense,
    g: &Dense,
    m: &mut Dense,
    v: &mut Dense,
    lr: f64,
    decay: f64,
    bc1: f64,
    bc2: f64,
    cfg: &TrainConfig,
) {
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
    let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p *= decay;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    };
    Zip::from(&mut layer.weight)
        .and(&g.weight)
        .and(&mut m.weight)
        .and(&mut v.weight)
        .for_each(update);
    Zip::from(&mut layer.bias)
        .and(&g.bias)
        .and(&mut m.bias)
        .and(&mut v.bias)
        .for_each(update);
}

/// Patch-level accuracy at the 0.5 probability cut.
pub fn accuracy(model: &PointSetModel, patches: &[EncodedPatch], labels: &[bool]) -> Result<f64> {
    let probs = model.predict(patches)?;
    let hits = probs.iter().zip(labels).filter(|(&p, &pd)| (p >= 0.5) == pd).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Mini-batch AdamW with a per-epoch cosine schedule. The shuffle order comes
/// from `config.seed`, so identical inputs give identical parameters.
pub fn train(
    mut model: PointSetModel,
    patches: &[EncodedPatch],
    labels: &[bool],
    config: &TrainConfig,
    validation: Option<(&[EncodedPatch], &[bool])>,
) -> Result<(PointSetModel, TrainHistory)> {
    config.validate()?;
    if patches.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: patches.len(), got: labels.len() });
    }
    if !labels.iter().any(|&l| l) || !labels.iter().any(|&l| !l) {
        return Err(Error::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(&model);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.learning_rate, epoch, config.epochs);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedPatch> = idx.iter().map(|&i| &patches[i]).collect();
            let batch_labels: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads, probs) = model.loss_and_gradients(&batch, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            hits += probs
                .iter()
                .zip(&batch_labels)
                .filter(|(&p, &pd)| (p >= 0.5) == pd)
                .count();
            opt.update(&mut model, &grads, lr, config);
        }
        let val_acc = match validation {
            Some((vp, vl)) if !vp.is_empty() => Some(accuracy(&model, vp, vl)?),
            _ => None,
        };
        history.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / patches.len() as f64,
            train_acc: hits as f64 / patches.len() as f64,
            val_acc,
        });
    }
    Ok((model, history))
}
