//! Bag-of-embeddings scorer: `y = mean(E[ids]) · W + b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Encoder, EncoderConfig, ScoreVector, TokenSequence, TokenSpace};
use crate::linalg::{mat_vec, outer_acc, vec_mat};
use crate::params::{ParamStore, Tensor};

const EMB: usize = 0;
const HEAD_W: usize = 1;
const HEAD_B: usize = 2;

pub(super) struct Cache {
    pooled: Vec<f64>,
    mask: Option<Vec<f64>>,
}

pub(super) fn init(cfg: &EncoderConfig, space: &TokenSpace, rng: &mut ChaCha8Rng) -> ParamStore {
    let n = space.n_classes;
    ParamStore::new(vec![
        Tensor::uniform("embedding", &[space.size(), cfg.d], 0.1, rng),
        Tensor::uniform("head_w", &[cfg.d, n], 1.0 / (cfg.d as f64).sqrt(), rng),
        Tensor::zeros("head_b", &[n]),
    ])
}

pub(super) fn forward(enc: &Encoder, seq: &TokenSequence, rng: Option<&mut ChaCha8Rng>) -> (ScoreVector, Cache) {
    let d = enc.config.d;
    let p = &enc.params.tensors;
    let mut pooled = vec![0.0; d];
    for &id in &seq.ids {
        for (o, e) in pooled.iter_mut().zip(p[EMB].row(id)) {
            *o += e;
        }
    }
    let inv = 1.0 / seq.len() as f64;
    pooled.iter_mut().for_each(|v| *v *= inv);

    let mask = match rng {
        Some(rng) if enc.config.dropout > 0.0 => {
            let keep = 1.0 - enc.config.dropout;
            let m: Vec<f64> = (0..d).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
            pooled.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        }
        _ => None,
    };

    let mut scores = vec![0.0; enc.n_classes()];
    vec_mat(&pooled, &p[HEAD_W].data, &mut scores);
    for (s, b) in scores.iter_mut().zip(&p[HEAD_B].data) {
        *s += b;
    }
    (ScoreVector(scores), Cache { pooled, mask })
}

pub(super) fn backward(enc: &Encoder, seq: &TokenSequence, cache: &Cache, dscores: &[f64], grads: &mut ParamStore) {
    let d = enc.config.d;
    let p = &enc.params.tensors;
    let g = &mut grads.tensors;
    outer_acc(&cache.pooled, dscores, &mut g[HEAD_W].data);
    for (gb, ds) in g[HEAD_B].data.iter_mut().zip(dscores) {
        *gb += ds;
    }
    let mut dpooled = vec![0.0; d];
    mat_vec(&p[HEAD_W].data, dscores, &mut dpooled);
    if let Some(mask) = &cache.mask {
        dpooled.iter_mut().zip(mask).for_each(|(v, k)| *v *= k);
    }
    let inv = 1.0 / seq.len() as f64;
    for &id in &seq.ids {
        for (ge, dp) in g[EMB].row_mut(id).iter_mut().zip(&dpooled) {
            *ge += dp * inv;
        }
    }
}
