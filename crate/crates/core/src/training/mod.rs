//! Training recipe: AdamW with decoupled weight decay, linear warmup then linear
//! decay, fixed epoch/batch discipline.

mod adamw;
mod encoder_train;
mod schedule;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::{Error, Result};

pub use adamw::{optimizer_step, AdamWState};
pub use encoder_train::{build_token_space, train_encoder, TrainOutcome};
pub use schedule::{lr_at, warmup_steps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults for encoders trained from scratch.
    fn default() -> Self {
        TrainConfig {
            epochs: 6,
            batch_size: 32,
            peak_lr: 1e-3,
            warmup_fraction: 0.10,
            weight_decay: 0.0,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The fine-tuning recipe for pre-trained encoders: lr 2e-5, 10% warmup, 6 epochs
    /// of batch 32.
    pub fn fine_tuning() -> Self {
        TrainConfig {
            peak_lr: 2e-5,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad(format!("peak_lr must be > 0, got {}", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.weight_decay < 0.0 || self.epsilon <= 0.0 {
            return bad("weight_decay must be >= 0 and epsilon > 0".into());
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("betas ({b1}, {b2}) outside [0, 1)"));
        }
        Ok(())
    }

    pub fn total_steps(&self, examples: usize) -> usize {
        self.epochs * examples.div_ceil(self.batch_size)
    }
}

/// Metrics recorded after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub validation_macro_f1: Option<f64>,
}

/// Everything about a training run except the fitted parameters. Wall-clock time is
/// kept out of the serialized form so reports are reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub recurrent: bool,
    pub examples: usize,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub config: TrainConfig,
    pub step_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<EpochMetrics>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Per-step record of the optimization loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

/// A model whose parameters can be fitted by [`run_epochs`].
pub trait Trainable {
    type Item: Clone;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Mean loss over `batch` and its gradient. `rng` drives dropout masks.
    fn batch_loss_and_grad(&self, batch: &[Self::Item], rng: &mut ChaCha8Rng) -> Result<(f64, ParamStore)>;
}

/// Shared optimization loop: per-epoch seeded shuffle, fixed-size batches, AdamW
/// steps under the warmup/decay schedule. `after_epoch` sees the model after each
/// epoch.
pub fn run_epochs<M: Trainable>(
    model: &mut M,
    items: &[M::Item],
    cfg: &TrainConfig,
    mut after_epoch: impl FnMut(usize, &M) -> Result<()>,
) -> Result<StepLog> {
    use rand::seq::SliceRandom;

    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total = cfg.total_steps(items.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = AdamWState::new(model.params());
    let mut log = StepLog::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<M::Item> = chunk.iter().map(|&i| items[i].clone()).collect();
            let (loss, grads) = model
                .batch_loss_and_grad(&batch, &mut dropout_rng)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::Diverged { step },
                    other => other,
                })?;
            let lr = lr_at(step, total, cfg);
            optimizer_step(model.params_mut(), &grads, &mut state, lr, cfg).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::Diverged { step },
                other => other,
            })?;
            if !model.params().all_finite() {
                return Err(Error::Diverged { step });
            }
            log.losses.push(loss);
            log.learning_rates.push(lr);
            step += 1;
        }
        after_epoch(epoch, model)?;
    }
    debug_assert_eq!(step, total);
    Ok(log)
}
