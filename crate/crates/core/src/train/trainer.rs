use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Split;
use super::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::arrn::{ArrnModel, DropoutMask};
use crate::error::{Error, Result};
use crate::nn::{accuracy, softmax_cross_entropy, HasParameters, Mode};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Learning rate at the end of the cosine schedule.
    pub min_lr: f64,
    /// Apply the model's Laplacian dropout configuration.
    pub laplacian_dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            seed: 0,
            optimizer: AdamWConfig::default(),
            min_lr: 1e-5,
            laplacian_dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.optimizer.lr >= 0.0 && self.min_lr >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

/// Mean cross-entropy and accuracy per epoch, measured on the training
/// batches as they were seen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.9},{:.6},{:.6e}\n", e.epoch, e.loss, e.accuracy, e.lr));
        }
        out
    }
}

/// Minibatch training with AdamW and cosine annealing.
///
/// The random stream is consumed in a fixed order (epoch shuffle, then per
/// batch the dropout draws finest level first, then the head mask), so the
/// result is a pure function of the model, data and config.
pub fn train<T: Real>(model: &mut ArrnModel<T>, data: &Split<T>, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if data.inputs.grid() != model.ladder().level(0) {
        return Err(Error::Shape(format!(
            "training data on {} but the model's finest grid is {}",
            data.inputs.grid(),
            model.ladder().level(0)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(config.optimizer);
    let batches = data.len().div_ceil(config.batch_size);
    let total = (batches * config.epochs) as u64;
    let classes = model.config().classes;
    let dropout = model.config().dropout.clone();
    let use_dropout = config.laplacian_dropout && dropout.is_active();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits, mut lr) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = data.gather(idx);
            let mask = use_dropout.then(|| DropoutMask::sample(&dropout, &mut rng));
            let head_mask = model.head().sample_mask(idx.len(), &mut rng);
            let (logits, tape) = model.forward_taped(&x, mask.as_ref(), Mode::Train, head_mask.as_deref())?;
            let (loss, grad) = softmax_cross_entropy(logits.values(), classes, &labels);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step: b, loss });
            }
            loss_sum += loss * idx.len() as f64;
            hits += accuracy(logits.values(), classes, &labels) * idx.len() as f64;
            let mut params = Vec::new();
            model.collect_parameters_mut(&mut params);
            params.into_iter().for_each(|p| p.zero_grad());
            model.backward(&tape, &logits.with_values(grad))?;
            model.commit(&tape);
            lr = cosine_lr(config.optimizer.lr, config.min_lr, opt.steps(), total);
            let mut params = Vec::new();
            model.collect_parameters_mut(&mut params);
            opt.step(&mut params, lr);
        }
        report.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: hits / data.len() as f64,
            lr,
        });
    }
    Ok(report)
}

/// Eval-mode accuracy of full evaluation on `data` (any grid up to the
/// finest; coarser inputs are interpolated).
pub fn evaluate_full<T: Real>(model: &ArrnModel<T>, data: &Split<T>, batch: usize) -> Result<f64> {
    let classes = model.config().classes;
    let mut hits = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, labels) = data.gather(chunk);
        let logits = model.forward_full_at(&x, Mode::Eval)?;
        hits += accuracy(logits.values(), classes, &labels) * chunk.len() as f64;
    }
    Ok(hits / data.len().max(1) as f64)
}
