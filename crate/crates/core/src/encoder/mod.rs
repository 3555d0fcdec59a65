//! Trainable page scorers: token sequence (possibly carrying prepended page-type
//! tokens) to one logit per class.
//!
//! Two variants share the same input space and checkpoint format:
//! - `linear`: mean-pooled token embeddings followed by an affine head
//! - `tiny-transformer`: pre-LN transformer encoder read out at the `[CLS]` position

mod linear;
mod transformer;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelMode, FIRST_PAGE_TOKEN};
use crate::features::Vocabulary;
use crate::linalg::{argmax, log_sum_exp, sigmoid, softmax};
use crate::params::ParamStore;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pagectx-encoder/1";

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const FIRST_PAGE: usize = 3;
const RESERVED: usize = 4;

/// Combined input space: `[PAD] [UNK] [CLS] [-1]`, then one special token per class,
/// then the text vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpace {
    pub n_classes: usize,
    pub text: Vocabulary,
}

impl TokenSpace {
    pub fn new(n_classes: usize, text: Vocabulary) -> Self {
        TokenSpace { n_classes, text }
    }

    pub fn size(&self) -> usize {
        RESERVED + self.n_classes + self.text.len()
    }

    pub fn special(&self, class: usize) -> usize {
        assert!(class < self.n_classes);
        RESERVED + class
    }

    pub fn text_id(&self, token: &str) -> usize {
        self.text
            .id(token)
            .map(|id| RESERVED + self.n_classes + id)
            .unwrap_or(UNK)
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == FIRST_PAGE || (RESERVED..RESERVED + self.n_classes).contains(&id)
    }

    pub fn render(&self, id: usize) -> String {
        match id {
            PAD => "[PAD]".into(),
            UNK => "[UNK]".into(),
            CLS => "[CLS]".into(),
            FIRST_PAGE => FIRST_PAGE_TOKEN.into(),
            i if i < RESERVED + self.n_classes => format!("[type_{}]", i - RESERVED + 1),
            i => self.text.token(i - RESERVED - self.n_classes).to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn render(&self, space: &TokenSpace) -> Vec<String> {
        self.ids.iter().map(|&i| space.render(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderVariant {
    Linear,
    TinyTransformer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub d: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    /// Feed-forward width; `0` means `4 * d`.
    #[serde(default)]
    pub ffn_dim: usize,
    pub max_len: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_layers() -> usize {
    1
}

fn default_heads() -> usize {
    2
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: EncoderVariant::Linear,
            d: 32,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 0,
            max_len: 64,
            dropout: 0.0,
            init_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn ffn_width(&self) -> usize {
        if self.ffn_dim == 0 {
            4 * self.d
        } else {
            self.ffn_dim
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d == 0 {
            return bad("encoder d must be >= 1".into());
        }
        if self.max_len < n_classes + 2 {
            return bad(format!("max_len {} < n_classes + 2 = {}", self.max_len, n_classes + 2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.variant == EncoderVariant::TinyTransformer {
            if self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
                return bad(format!("d = {} not divisible by n_heads = {}", self.d, self.n_heads));
            }
            if self.n_layers == 0 {
                return bad("n_layers must be >= 1".into());
            }
        }
        Ok(())
    }
}

/// Anything that scores a token sequence over a [`TokenSpace`].
pub trait PageModel {
    fn token_space(&self) -> &TokenSpace;
    fn max_len(&self) -> usize;
    fn score(&self, seq: &TokenSequence) -> ScoreVector;
}

/// Decision rule: argmax (lowest index on ties) for multiclass; `σ(y) ≥ 0.5` for
/// multilabel, falling back to the argmax singleton when nothing passes.
pub fn predict(scores: &ScoreVector, mode: LabelMode) -> Vec<usize> {
    match mode {
        LabelMode::Multiclass => vec![argmax(&scores.0)],
        LabelMode::Multilabel => {
            let picked: Vec<usize> = scores
                .0
                .iter()
                .enumerate()
                .filter(|(_, &y)| sigmoid(y) >= 0.5)
                .map(|(i, _)| i)
                .collect();
            if picked.is_empty() {
                vec![argmax(&scores.0)]
            } else {
                picked
            }
        }
    }
}

/// Per-example loss and the gradient w.r.t. the logits.
pub fn loss_and_dlogits(scores: &[f64], gold: &[usize], mode: LabelMode) -> (f64, Vec<f64>) {
    match mode {
        LabelMode::Multiclass => {
            let g = gold[0];
            let loss = log_sum_exp(scores) - scores[g];
            let mut d = softmax(scores);
            d[g] -= 1.0;
            (loss, d)
        }
        LabelMode::Multilabel => {
            let n = scores.len() as f64;
            let mut loss = 0.0;
            let mut d = vec![0.0; scores.len()];
            for (c, &y) in scores.iter().enumerate() {
                let t = if gold.contains(&c) { 1.0 } else { 0.0 };
                // softplus(y) - t*y, stable
                let softplus = y.max(0.0) + (-y.abs()).exp().ln_1p();
                loss += softplus - t * y;
                d[c] = (sigmoid(y) - t) / n;
            }
            (loss / n, d)
        }
    }
}

enum Cache {
    Linear(linear::Cache),
    Transformer(Box<transformer::Cache>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub space: TokenSpace,
    pub params: ParamStore,
}

impl Encoder {
    pub fn new(config: EncoderConfig, space: TokenSpace) -> Result<Self> {
        config.validate(space.n_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let params = match config.variant {
            EncoderVariant::Linear => linear::init(&config, &space, &mut rng),
            EncoderVariant::TinyTransformer => transformer::init(&config, &space, &mut rng),
        };
        Ok(Encoder { config, space, params })
    }

    pub fn n_classes(&self) -> usize {
        self.space.n_classes
    }

    /// Inference forward pass (no dropout).
    pub fn forward(&self, seq: &TokenSequence) -> ScoreVector {
        self.forward_cached(seq, None).0
    }

    fn forward_cached(&self, seq: &TokenSequence, rng: Option<&mut ChaCha8Rng>) -> (ScoreVector, Cache) {
        assert!(!seq.is_empty() && seq.len() <= self.config.max_len, "sequence length {} invalid", seq.len());
        match self.config.variant {
            EncoderVariant::Linear => {
                let (s, c) = linear::forward(self, seq, rng);
                (s, Cache::Linear(c))
            }
            EncoderVariant::TinyTransformer => {
                let (s, c) = transformer::forward(self, seq, rng);
                (s, Cache::Transformer(Box::new(c)))
            }
        }
    }

    fn backward(&self, seq: &TokenSequence, cache: &Cache, dscores: &[f64], grads: &mut ParamStore) {
        match cache {
            Cache::Linear(c) => linear::backward(self, seq, c, dscores, grads),
            Cache::Transformer(c) => transformer::backward(self, seq, c, dscores, grads),
        }
    }

    /// Mean loss over the batch and its exact gradient. Examples are processed in
    /// order, so the accumulated gradient is reproducible. Dropout is active only
    /// when `rng` is given.
    pub fn loss_and_grad(
        &self,
        batch: &[(TokenSequence, Vec<usize>)],
        mode: LabelMode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, ParamStore)> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for (index, (seq, gold)) in batch.iter().enumerate() {
            let (scores, cache) = self.forward_cached(seq, rng.as_deref_mut());
            let (loss, mut d) = loss_and_dlogits(&scores.0, gold, mode);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { index });
            }
            total += loss;
            d.iter_mut().for_each(|x| *x *= scale);
            self.backward(seq, &cache, &d, &mut grads);
        }
        Ok((total * scale, grads))
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let ckpt = EncoderCheckpointRef {
            format: CHECKPOINT_FORMAT,
            meta,
            encoder: self,
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Encoder, CheckpointMeta)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: EncoderCheckpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        let expected = Encoder::new(ckpt.encoder.config.clone(), ckpt.encoder.space.clone())?;
        expected.params.check_layout(&ckpt.encoder.params)?;
        Ok((ckpt.encoder, ckpt.meta))
    }
}

impl PageModel for Encoder {
    fn token_space(&self) -> &TokenSpace {
        &self.space
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn score(&self, seq: &TokenSequence) -> ScoreVector {
        self.forward(seq)
    }
}

/// Metadata stored next to encoder parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub toolkit_version: String,
    pub label_mode: LabelMode,
    pub class_names: Vec<String>,
    /// Whether the model was trained with prepended previous-page tokens.
    pub recurrent: bool,
    pub train_seed: u64,
}

#[derive(Serialize)]
struct EncoderCheckpointRef<'a> {
    format: &'static str,
    meta: &'a CheckpointMeta,
    encoder: &'a Encoder,
}

#[derive(Deserialize)]
struct EncoderCheckpoint {
    format: String,
    meta: CheckpointMeta,
    encoder: Encoder,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_and_ties() {
        assert_eq!(predict(&ScoreVector(vec![0.1, 2.0, -1.0]), LabelMode::Multiclass), vec![1]);
        assert_eq!(predict(&ScoreVector(vec![1.0, 1.0]), LabelMode::Multiclass), vec![0]);
    }

    #[test]
    fn multilabel_threshold() {
        // logits whose sigmoids are 0.7, 0.2, 0.6
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let s = ScoreVector(vec![logit(0.7), logit(0.2), logit(0.6)]);
        assert_eq!(predict(&s, LabelMode::Multilabel), vec![0, 2]);
        let none = ScoreVector(vec![-3.0, -1.0, -2.0]);
        assert_eq!(predict(&none, LabelMode::Multilabel), vec![1]);
    }

    #[test]
    fn uniform_logits_give_ln_n() {
        let (loss, d) = loss_and_dlogits(&[0.5; 5], &[2], LabelMode::Multiclass);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!((d.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_have_vanishing_loss() {
        for scale in [10.0, 100.0, 1000.0] {
            let (loss, _) = loss_and_dlogits(&[scale, 0.0, 0.0], &[0], LabelMode::Multiclass);
            assert!(loss < 3.0 * (-scale).exp() + 1e-300);
            let (bce, _) = loss_and_dlogits(&[scale, -scale], &[0], LabelMode::Multilabel);
            assert!(bce < 2.0 * (-scale).exp() + 1e-300);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig {
            variant: EncoderVariant::TinyTransformer,
            d: 10,
            n_heads: 3,
            ..Default::default()
        };
        assert!(c.validate(3).is_err());
        c.n_heads = 2;
        assert!(c.validate(3).is_ok());
        c.max_len = 4;
        assert!(c.validate(3).is_err());
    }
}
