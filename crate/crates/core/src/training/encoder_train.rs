use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{run_epochs, warmup_steps, EpochMetrics, TrainConfig, TrainReport, Trainable};
use crate::corpus::{DocumentSequence, LabelMode, TypeVocabulary};
use crate::encoder::{predict, Encoder, EncoderConfig, TokenSequence, TokenSpace};
use crate::eval::score;
use crate::features::fit_vocabulary;
use crate::params::ParamStore;
use crate::recurrence::{build_examples, infer_all};
use crate::Result;

/// Input space over the training split's vocabulary (capped at `vocab_cap`).
pub fn build_token_space(train: &[DocumentSequence], vocab_cap: usize, n_classes: usize) -> Result<TokenSpace> {
    Ok(TokenSpace::new(n_classes, fit_vocabulary(train, vocab_cap)?))
}

pub struct TrainOutcome {
    pub encoder: Encoder,
    pub report: TrainReport,
}

struct EncoderObjective {
    encoder: Encoder,
    mode: LabelMode,
}

impl Trainable for EncoderObjective {
    type Item = (TokenSequence, Vec<usize>);

    fn params(&self) -> &ParamStore {
        &self.encoder.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.encoder.params
    }

    fn batch_loss_and_grad(&self, batch: &[Self::Item], rng: &mut ChaCha8Rng) -> Result<(f64, ParamStore)> {
        self.encoder.loss_and_grad(batch, self.mode, Some(rng))
    }
}

/// Trains a page encoder. The recurrent and context-oblivious variants differ only in
/// how examples are built: with `recurrent`, each page carries the gold labels of its
/// predecessor (teacher forcing).
pub fn train_encoder(
    encoder_cfg: &EncoderConfig,
    space: TokenSpace,
    train: &[DocumentSequence],
    validation: &[DocumentSequence],
    vocabulary: &TypeVocabulary,
    recurrent: bool,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mode = vocabulary.label_mode();
    let encoder = Encoder::new(encoder_cfg.clone(), space)?;
    let examples = build_examples(train, &encoder.space, encoder_cfg.max_len, recurrent);
    let items: Vec<(TokenSequence, Vec<usize>)> = examples.into_iter().map(|e| (e.sequence, e.gold)).collect();
    let mut objective = EncoderObjective { encoder, mode };
    let batches_per_epoch = items.len().div_ceil(cfg.batch_size.max(1));

    let mut epochs = Vec::new();
    let log = run_epochs(&mut objective, &items, cfg, |epoch, obj| {
        let correct = items
            .iter()
            .filter(|(seq, gold)| predict(&obj.encoder.forward(seq), mode) == *gold)
            .count();
        let (validation_accuracy, validation_macro_f1) = if validation.is_empty() {
            (None, None)
        } else {
            let traces = infer_all(&obj.encoder, validation, mode, recurrent);
            let preds: Vec<Vec<usize>> = traces.iter().flat_map(|t| t.decided()).collect();
            let golds: Vec<Vec<usize>> = validation.iter().flat_map(|d| d.pages.iter().map(|p| p.gold_labels.clone())).collect();
            let s = score(&preds, &golds, vocabulary)?;
            (Some(s.accuracy), Some(s.macro_f1))
        };
        epochs.push(EpochMetrics {
            epoch,
            mean_loss: f64::NAN,
            train_accuracy: correct as f64 / items.len() as f64,
            validation_accuracy,
            validation_macro_f1,
        });
        Ok(())
    })?;
    for (e, chunk) in epochs.iter_mut().zip(log.losses.chunks(batches_per_epoch)) {
        e.mean_loss = chunk.iter().sum::<f64>() / chunk.len() as f64;
    }
    let total_steps = cfg.total_steps(items.len());
    let report = TrainReport {
        recurrent,
        examples: items.len(),
        total_steps,
        warmup_steps: warmup_steps(total_steps, cfg),
        config: cfg.clone(),
        step_losses: log.losses,
        learning_rates: log.learning_rates,
        epochs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        encoder: objective.encoder,
        report,
    })
}
