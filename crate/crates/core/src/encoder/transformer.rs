//! Pre-LN transformer encoder with GELU feed-forward blocks and a `[CLS]` readout.
//! Gradients are derived by hand; every intermediate needed by the backward pass is
//! kept in [`Cache`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Encoder, EncoderConfig, ScoreVector, TokenSequence, TokenSpace};
use crate::linalg::{mat_vec, outer_acc, vec_mat_acc};
use crate::params::{ParamStore, Tensor};

const LN_EPS: f64 = 1e-5;
const EMB: usize = 0;
const POS: usize = 1;
const PER_LAYER: usize = 16;

// offsets inside a layer block
const LN1_G: usize = 0;
const LN1_B: usize = 1;
const WQ: usize = 2;
const BQ: usize = 3;
const WK: usize = 4;
const BK: usize = 5;
const WV: usize = 6;
const BV: usize = 7;
const WO: usize = 8;
const BO: usize = 9;
const LN2_G: usize = 10;
const LN2_B: usize = 11;
const W1: usize = 12;
const B1: usize = 13;
const W2: usize = 14;
const B2: usize = 15;

fn layer_base(l: usize) -> usize {
    2 + l * PER_LAYER
}

fn final_base(cfg: &EncoderConfig) -> usize {
    2 + cfg.n_layers * PER_LAYER
}

pub(super) fn init(cfg: &EncoderConfig, space: &TokenSpace, rng: &mut ChaCha8Rng) -> ParamStore {
    let d = cfg.d;
    let f = cfg.ffn_width();
    let n = space.n_classes;
    let wd = 1.0 / (d as f64).sqrt();
    let wf = 1.0 / (f as f64).sqrt();
    let mut t = vec![
        Tensor::uniform("embedding", &[space.size(), d], 0.1, rng),
        Tensor::uniform("position", &[cfg.max_len, d], 0.1, rng),
    ];
    for l in 0..cfg.n_layers {
        let name = |s: &str| format!("layer{l}.{s}");
        t.push(Tensor::filled(name("ln1_g"), &[d], 1.0));
        t.push(Tensor::zeros(name("ln1_b"), &[d]));
        for w in ["q", "k", "v", "o"] {
            t.push(Tensor::uniform(name(&format!("w{w}")), &[d, d], wd, rng));
            t.push(Tensor::zeros(name(&format!("b{w}")), &[d]));
        }
        t.push(Tensor::filled(name("ln2_g"), &[d], 1.0));
        t.push(Tensor::zeros(name("ln2_b"), &[d]));
        t.push(Tensor::uniform(name("w1"), &[d, f], wd, rng));
        t.push(Tensor::zeros(name("b1"), &[f]));
        t.push(Tensor::uniform(name("w2"), &[f, d], wf, rng));
        t.push(Tensor::zeros(name("b2"), &[d]));
    }
    t.push(Tensor::filled("lnf_g", &[d], 1.0));
    t.push(Tensor::zeros("lnf_b", &[d]));
    t.push(Tensor::uniform("head_w", &[d, n], wd, rng));
    t.push(Tensor::zeros("head_b", &[n]));
    ParamStore::new(t)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

struct LayerNormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

/// Row-wise layer norm over an `rows × d` matrix.
fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LayerNormCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (row[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = g[i] * h + b[i];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

/// Accumulates into `dx`, `dg`, `db`.
fn layer_norm_backward(dy: &[f64], d: usize, g: &[f64], cache: &LayerNormCache, dx: &mut [f64], dg: &mut [f64], db: &mut [f64]) {
    let rows = dy.len() / d;
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for i in 0..d {
            dx[r * d + i] += cache.rstd[r] * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

/// `rows × in` times `in × out` plus bias.
fn affine(x: &[f64], in_dim: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    let rows = x.len() / in_dim;
    let mut y = vec![0.0; rows * out_dim];
    for r in 0..rows {
        let yr = &mut y[r * out_dim..(r + 1) * out_dim];
        yr.copy_from_slice(b);
        vec_mat_acc(&x[r * in_dim..(r + 1) * in_dim], w, yr);
    }
    y
}

/// Backward of [`affine`]: accumulates weight/bias grads and returns `dx`.
fn affine_backward(x: &[f64], in_dim: usize, w: &[f64], dy: &[f64], out_dim: usize, dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let rows = x.len() / in_dim;
    let mut dx = vec![0.0; rows * in_dim];
    for r in 0..rows {
        let dyr = &dy[r * out_dim..(r + 1) * out_dim];
        outer_acc(&x[r * in_dim..(r + 1) * in_dim], dyr, dw);
        for (g, v) in db.iter_mut().zip(dyr) {
            *g += v;
        }
        mat_vec(w, dyr, &mut dx[r * in_dim..(r + 1) * in_dim]);
    }
    dx
}

struct LayerCache {
    ln1: LayerNormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × L × L` attention weights.
    p: Vec<f64>,
    o: Vec<f64>,
    ln2: LayerNormCache,
    bn: Vec<f64>,
    u: Vec<f64>,
    hact: Vec<f64>,
}

pub(super) struct Cache {
    len: usize,
    embed_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LayerNormCache,
    cls: Vec<f64>,
    cls_mask: Option<Vec<f64>>,
}

fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

pub(super) fn forward(enc: &Encoder, seq: &TokenSequence, mut rng: Option<&mut ChaCha8Rng>) -> (ScoreVector, Cache) {
    let cfg = &enc.config;
    let d = cfg.d;
    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let p = &enc.params.tensors;
    let len = seq.len();
    let drop = cfg.dropout > 0.0;

    let mut x = vec![0.0; len * d];
    for (t, &id) in seq.ids.iter().enumerate() {
        let row = &mut x[t * d..(t + 1) * d];
        for ((o, e), q) in row.iter_mut().zip(p[EMB].row(id)).zip(p[POS].row(t)) {
            *o = e + q;
        }
    }
    let embed_mask = match rng.as_deref_mut() {
        Some(r) if drop => {
            let m = dropout_mask(len * d, cfg.dropout, r);
            x.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        }
        _ => None,
    };

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let base = layer_base(l);
        let (a, ln1) = layer_norm(&x, d, &p[base + LN1_G].data, &p[base + LN1_B].data);
        let q = affine(&a, d, &p[base + WQ].data, &p[base + BQ].data);
        let k = affine(&a, d, &p[base + WK].data, &p[base + BK].data);
        let v = affine(&a, d, &p[base + WV].data, &p[base + BV].data);
        let mut att_p = vec![0.0; heads * len * len];
        let mut o = vec![0.0; len * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let prow = &mut att_p[(h * len + i) * len..(h * len + i + 1) * len];
                for (j, s) in prow.iter_mut().enumerate() {
                    *s = scale
                        * (0..dh).map(|c| q[i * d + off + c] * k[j * d + off + c]).sum::<f64>();
                }
                let m = prow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for s in prow.iter_mut() {
                    *s = (*s - m).exp();
                    z += *s;
                }
                prow.iter_mut().for_each(|s| *s /= z);
                for (j, &pij) in prow.iter().enumerate() {
                    for c in 0..dh {
                        o[i * d + off + c] += pij * v[j * d + off + c];
                    }
                }
            }
        }
        let att = affine(&o, d, &p[base + WO].data, &p[base + BO].data);
        x.iter_mut().zip(&att).for_each(|(xi, ai)| *xi += ai);

        let (bn, ln2) = layer_norm(&x, d, &p[base + LN2_G].data, &p[base + LN2_B].data);
        let u = affine(&bn, d, &p[base + W1].data, &p[base + B1].data);
        let hact: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
        let ff = affine(&hact, cfg.ffn_width(), &p[base + W2].data, &p[base + B2].data);
        x.iter_mut().zip(&ff).for_each(|(xi, fi)| *xi += fi);

        layers.push(LayerCache { ln1, a, q, k, v, p: att_p, o, ln2, bn, u, hact });
    }

    let fb = final_base(cfg);
    let (mut cls, lnf) = layer_norm(&x[..d], d, &p[fb].data, &p[fb + 1].data);
    let cls_mask = match rng {
        Some(r) if drop => {
            let m = dropout_mask(d, cfg.dropout, r);
            cls.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        }
        _ => None,
    };
    let mut scores = p[fb + 3].data.clone();
    vec_mat_acc(&cls, &p[fb + 2].data, &mut scores);
    (
        ScoreVector(scores),
        Cache { len, embed_mask, layers, lnf, cls, cls_mask },
    )
}

pub(super) fn backward(enc: &Encoder, seq: &TokenSequence, cache: &Cache, dscores: &[f64], grads: &mut ParamStore) {
    let cfg = &enc.config;
    let d = cfg.d;
    let f = cfg.ffn_width();
    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let p = &enc.params.tensors;
    let g = &mut grads.tensors;
    let len = cache.len;
    let fb = final_base(cfg);

    // head
    outer_acc(&cache.cls, dscores, &mut g[fb + 2].data);
    g[fb + 3].data.iter_mut().zip(dscores).for_each(|(a, b)| *a += b);
    let mut dcls = vec![0.0; d];
    mat_vec(&p[fb + 2].data, dscores, &mut dcls);
    if let Some(m) = &cache.cls_mask {
        dcls.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
    let mut dx = vec![0.0; len * d];
    {
        let (gg, gb) = split_two(g, fb, fb + 1);
        layer_norm_backward(&dcls, d, &p[fb].data, &cache.lnf, &mut dx[..d], &mut gg.data, &mut gb.data);
    }

    for l in (0..cfg.n_layers).rev() {
        let base = layer_base(l);
        let c = &cache.layers[l];

        // feed-forward residual: x_out = x_mid + W2·gelu(W1·LN2(x_mid))
        let dff = dx.clone();
        let dhact = {
            let (gw, gb) = split_two(g, base + W2, base + B2);
            affine_backward(&c.hact, f, &p[base + W2].data, &dff, d, &mut gw.data, &mut gb.data)
        };
        let du: Vec<f64> = dhact.iter().zip(&c.u).map(|(dv, &u)| dv * gelu_grad(u)).collect();
        let dbn = {
            let (gw, gb) = split_two(g, base + W1, base + B1);
            affine_backward(&c.bn, d, &p[base + W1].data, &du, f, &mut gw.data, &mut gb.data)
        };
        {
            let (gg, gb) = split_two(g, base + LN2_G, base + LN2_B);
            layer_norm_backward(&dbn, d, &p[base + LN2_G].data, &c.ln2, &mut dx, &mut gg.data, &mut gb.data);
        }

        // attention residual: x_mid = x_in + Wo·Attn(LN1(x_in))
        let datt = dx.clone();
        let do_ = {
            let (gw, gb) = split_two(g, base + WO, base + BO);
            affine_backward(&c.o, d, &p[base + WO].data, &datt, d, &mut gw.data, &mut gb.data)
        };
        let mut dq = vec![0.0; len * d];
        let mut dk = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        let mut dp = vec![0.0; len];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let prow = &c.p[(h * len + i) * len..(h * len + i + 1) * len];
                for j in 0..len {
                    dp[j] = (0..dh).map(|cc| do_[i * d + off + cc] * c.v[j * d + off + cc]).sum();
                    for cc in 0..dh {
                        dv[j * d + off + cc] += prow[j] * do_[i * d + off + cc];
                    }
                }
                let inner: f64 = prow.iter().zip(&dp).map(|(a, b)| a * b).sum();
                for j in 0..len {
                    let ds = prow[j] * (dp[j] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for cc in 0..dh {
                        dq[i * d + off + cc] += ds * c.k[j * d + off + cc];
                        dk[j * d + off + cc] += ds * c.q[i * d + off + cc];
                    }
                }
            }
        }
        let mut da = vec![0.0; len * d];
        for (w, b, dy) in [(WQ, BQ, &dq), (WK, BK, &dk), (WV, BV, &dv)] {
            let (gw, gb) = split_two(g, base + w, base + b);
            let part = affine_backward(&c.a, d, &p[base + w].data, dy, d, &mut gw.data, &mut gb.data);
            da.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
        }
        {
            let (gg, gb) = split_two(g, base + LN1_G, base + LN1_B);
            layer_norm_backward(&da, d, &p[base + LN1_G].data, &c.ln1, &mut dx, &mut gg.data, &mut gb.data);
        }
    }

    if let Some(m) = &cache.embed_mask {
        dx.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
    for (t, &id) in seq.ids.iter().enumerate() {
        let row = &dx[t * d..(t + 1) * d];
        g[EMB].row_mut(id).iter_mut().zip(row).for_each(|(a, b)| *a += b);
        g[POS].row_mut(t).iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
}

/// Two distinct mutable tensors (`i < j`).
fn split_two(g: &mut [Tensor], i: usize, j: usize) -> (&mut Tensor, &mut Tensor) {
    debug_assert!(i < j);
    let (lo, hi) = g.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

