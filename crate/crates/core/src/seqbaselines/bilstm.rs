//! Single-layer bidirectional LSTM tagging every page of a document from its page
//! vector. Gate order in the stacked `4h` blocks is input, forget, cell, output.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::ScoreVector;
use crate::features::PageVector;
use crate::linalg::{argmax, mat_vec, outer_acc, sigmoid, softmax, vec_mat_acc};
use crate::params::{ParamStore, Tensor};
use crate::recurrence::{PageStep, PredictionTrace};
use crate::training::{run_epochs, StepLog, TrainConfig, Trainable};
use crate::{Error, Result};

pub const BILSTM_CHECKPOINT_FORMAT: &str = "pagectx-bilstm/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiLstmConfig {
    pub hidden: usize,
    pub init_seed: u64,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        BiLstmConfig { hidden: 128, init_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstmModel {
    pub config: BiLstmConfig,
    pub input_dim: usize,
    pub n_classes: usize,
    pub params: ParamStore,
}

const DIRS: [&str; 2] = ["fwd", "bwd"];

struct StepCache {
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct DirCache {
    /// Indexed by position in the document, not by processing order.
    steps: Vec<StepCache>,
    hidden: Vec<Vec<f64>>,
}

impl BiLstmModel {
    pub fn new(config: BiLstmConfig, input_dim: usize, n_classes: usize) -> Result<Self> {
        if config.hidden == 0 || input_dim == 0 || n_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "BiLSTM needs hidden > 0, input_dim > 0 and at least two classes (got {}, {input_dim}, {n_classes})",
                config.hidden
            )));
        }
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let scale = 1.0 / (h as f64).sqrt();
        let mut tensors = Vec::new();
        for d in DIRS {
            tensors.push(Tensor::uniform(format!("{d}_wx"), &[input_dim, 4 * h], scale, &mut rng));
            tensors.push(Tensor::uniform(format!("{d}_wh"), &[h, 4 * h], scale, &mut rng));
            tensors.push(Tensor::zeros(format!("{d}_b"), &[4 * h]));
        }
        tensors.push(Tensor::uniform("head_w", &[2 * h, n_classes], scale, &mut rng));
        tensors.push(Tensor::zeros("head_b", &[n_classes]));
        Ok(BiLstmModel {
            config,
            input_dim,
            n_classes,
            params: ParamStore::new(tensors),
        })
    }

    fn tensor(&self, name: &str) -> &[f64] {
        &self.params.get(name).expect("bilstm layout").data
    }

    fn run_direction(&self, dir: usize, xs: &[&[f64]]) -> DirCache {
        let h = self.config.hidden;
        let d = DIRS[dir];
        let (wx, wh, b) = (
            self.tensor(&format!("{d}_wx")),
            self.tensor(&format!("{d}_wh")),
            self.tensor(&format!("{d}_b")),
        );
        let l = xs.len();
        let order: Vec<usize> = if dir == 0 { (0..l).collect() } else { (0..l).rev().collect() };
        let mut steps: Vec<Option<StepCache>> = (0..l).map(|_| None).collect();
        let mut hidden = vec![Vec::new(); l];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for &t in &order {
            let mut z = b.to_vec();
            vec_mat_acc(xs[t], wx, &mut z);
            vec_mat_acc(&h_prev, wh, &mut z);
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let c: Vec<f64> = (0..h).map(|k| z[h + k] * c_prev[k] + z[k] * z[2 * h + k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|x| x.tanh()).collect();
            let hn: Vec<f64> = (0..h).map(|k| z[3 * h + k] * tanh_c[k]).collect();
            steps[t] = Some(StepCache {
                gates: z,
                c_prev: std::mem::replace(&mut c_prev, c),
                h_prev: std::mem::replace(&mut h_prev, hn.clone()),
                tanh_c,
            });
            hidden[t] = hn;
        }
        DirCache {
            steps: steps.into_iter().map(Option::unwrap).collect(),
            hidden,
        }
    }

    fn forward_cached(&self, xs: &[&[f64]]) -> (Vec<ScoreVector>, [DirCache; 2]) {
        let caches = [self.run_direction(0, xs), self.run_direction(1, xs)];
        let (hw, hb) = (self.tensor("head_w"), self.tensor("head_b"));
        let logits = (0..xs.len())
            .map(|t| {
                let mut z = hb.to_vec();
                let cat: Vec<f64> = caches[0].hidden[t].iter().chain(&caches[1].hidden[t]).copied().collect();
                vec_mat_acc(&cat, hw, &mut z);
                ScoreVector(z)
            })
            .collect();
        (logits, caches)
    }

    pub fn forward(&self, xs: &[PageVector]) -> Vec<ScoreVector> {
        let rows: Vec<&[f64]> = xs.iter().map(|p| p.values.as_slice()).collect();
        self.forward_cached(&rows).0
    }

    fn check_input(&self, xs: &[Vec<f64>], gold: &[usize]) -> Result<()> {
        if xs.is_empty() || xs.len() != gold.len() {
            return Err(Error::LengthMismatch(format!("{} page vectors for {} labels", xs.len(), gold.len())));
        }
        if xs.iter().any(|x| x.len() != self.input_dim) {
            return Err(Error::Shape(format!("page vectors must have dimension {}", self.input_dim)));
        }
        if gold.iter().any(|&y| y >= self.n_classes) {
            return Err(Error::Shape("label out of range".into()));
        }
        Ok(())
    }

    /// Summed cross-entropy over the pages of one document, with gradients
    /// accumulated into `grads`.
    fn doc_loss_and_grad(&self, xs: &[Vec<f64>], gold: &[usize], grads: &mut ParamStore) -> f64 {
        let h = self.config.hidden;
        let n = self.n_classes;
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (logits, caches) = self.forward_cached(&rows);
        let hw = self.tensor("head_w").to_vec();
        let l = xs.len();
        let mut loss = 0.0;
        let mut dh = [vec![vec![0.0; h]; l], vec![vec![0.0; h]; l]];
        let ihw = grads.index_of("head_w").unwrap();
        let ihb = grads.index_of("head_b").unwrap();
        for t in 0..l {
            let p = softmax(&logits[t].0);
            loss -= p[gold[t]].ln();
            let mut dz = p;
            dz[gold[t]] -= 1.0;
            let cat: Vec<f64> = caches[0].hidden[t].iter().chain(&caches[1].hidden[t]).copied().collect();
            outer_acc(&cat, &dz, &mut grads.tensors[ihw].data);
            for (g, d) in grads.tensors[ihb].data.iter_mut().zip(&dz) {
                *g += d;
            }
            let mut dcat = vec![0.0; 2 * h];
            mat_vec(&hw, &dz, &mut dcat);
            dh[0][t].copy_from_slice(&dcat[..h]);
            dh[1][t].copy_from_slice(&dcat[h..]);
        }
        debug_assert_eq!(hw.len(), 2 * h * n);
        for dir in 0..2 {
            let d = DIRS[dir];
            let wh = self.tensor(&format!("{d}_wh")).to_vec();
            let (iwx, iwh, ib) = (
                grads.index_of(&format!("{d}_wx")).unwrap(),
                grads.index_of(&format!("{d}_wh")).unwrap(),
                grads.index_of(&format!("{d}_b")).unwrap(),
            );
            // reverse of the processing order
            let order: Vec<usize> = if dir == 0 { (0..l).rev().collect() } else { (0..l).collect() };
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for &t in &order {
                let s = &caches[dir].steps[t];
                let g = &s.gates;
                let mut dz = vec![0.0; 4 * h];
                for k in 0..h {
                    let dhk = dh[dir][t][k] + dh_next[k];
                    let (i, f, c, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let dc = dc_next[k] + dhk * o * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                    dz[k] = dc * c * i * (1.0 - i);
                    dz[h + k] = dc * s.c_prev[k] * f * (1.0 - f);
                    dz[2 * h + k] = dc * i * (1.0 - c * c);
                    dz[3 * h + k] = dhk * s.tanh_c[k] * o * (1.0 - o);
                    dc_next[k] = dc * f;
                }
                outer_acc(&xs[t], &dz, &mut grads.tensors[iwx].data);
                outer_acc(&s.h_prev, &dz, &mut grads.tensors[iwh].data);
                for (gb, d) in grads.tensors[ib].data.iter_mut().zip(&dz) {
                    *gb += d;
                }
                mat_vec(&wh, &dz, &mut dh_next);
            }
        }
        loss
    }

    /// Mean per-page cross-entropy over a batch of documents and its gradient.
    pub fn loss_and_grad(&self, batch: &[(Vec<Vec<f64>>, Vec<usize>)]) -> Result<(f64, ParamStore)> {
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        let mut pages = 0;
        for (k, (xs, gold)) in batch.iter().enumerate() {
            self.check_input(xs, gold)?;
            let loss = self.doc_loss_and_grad(xs, gold, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { index: k });
            }
            total += loss;
            pages += xs.len();
        }
        if pages == 0 {
            return Err(Error::EmptyCorpus);
        }
        grads.scale(1.0 / pages as f64);
        Ok((total / pages as f64, grads))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let v = serde_json::json!({ "format": BILSTM_CHECKPOINT_FORMAT, "bilstm": self });
        std::fs::write(path, serde_json::to_string(&v)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Ckpt {
            format: String,
            bilstm: BiLstmModel,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Ckpt = serde_json::from_str(&text)?;
        if ckpt.format != BILSTM_CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        let m = ckpt.bilstm;
        BiLstmModel::new(m.config.clone(), m.input_dim, m.n_classes)?.params.check_layout(&m.params)?;
        Ok(m)
    }

    /// Argmax decoding of every document.
    pub fn predict_all(&self, docs: &[(String, Vec<PageVector>)]) -> Vec<PredictionTrace> {
        docs.iter()
            .map(|(doc_id, xs)| PredictionTrace {
                doc_id: doc_id.clone(),
                steps: self
                    .forward(xs)
                    .into_iter()
                    .map(|s| PageStep {
                        labels: vec![argmax(&s.0)],
                        scores: s,
                        context: None,
                    })
                    .collect(),
            })
            .collect()
    }
}

pub fn bilstm_forward(model: &BiLstmModel, xs: &[PageVector]) -> Vec<ScoreVector> {
    model.forward(xs)
}

struct BiLstmObjective {
    model: BiLstmModel,
}

impl Trainable for BiLstmObjective {
    type Item = (Vec<Vec<f64>>, Vec<usize>);

    fn params(&self) -> &ParamStore {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.params
    }

    fn batch_loss_and_grad(&self, batch: &[Self::Item], _rng: &mut ChaCha8Rng) -> Result<(f64, ParamStore)> {
        self.model.loss_and_grad(batch)
    }
}

#[derive(Clone, Debug)]
pub struct BiLstmOutcome {
    pub model: BiLstmModel,
    pub log: StepLog,
    pub train_accuracy: f64,
}

/// Fits a BiLSTM with the shared AdamW/schedule loop; batches are documents.
pub fn bilstm_train(
    docs: &[(Vec<PageVector>, Vec<usize>)],
    n_classes: usize,
    config: &BiLstmConfig,
    cfg: &TrainConfig,
) -> Result<BiLstmOutcome> {
    let input_dim = docs
        .first()
        .and_then(|(xs, _)| xs.first())
        .map(|x| x.values.len())
        .ok_or(Error::EmptyCorpus)?;
    let model = BiLstmModel::new(config.clone(), input_dim, n_classes)?;
    let items: Vec<(Vec<Vec<f64>>, Vec<usize>)> = docs
        .iter()
        .map(|(xs, gold)| (xs.iter().map(|x| x.values.clone()).collect(), gold.clone()))
        .collect();
    for (xs, gold) in &items {
        model.check_input(xs, gold)?;
    }
    let mut objective = BiLstmObjective { model };
    let log = run_epochs(&mut objective, &items, cfg, |_, _| Ok(()))?;
    let model = objective.model;
    let (mut correct, mut total) = (0, 0);
    for (xs, gold) in docs {
        for (s, &y) in model.forward(xs).iter().zip(gold) {
            correct += (argmax(&s.0) == y) as usize;
            total += 1;
        }
    }
    Ok(BiLstmOutcome {
        model,
        log,
        train_accuracy: correct as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> PageVector {
        PageVector { values: v.to_vec() }
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut m = BiLstmModel::new(BiLstmConfig { hidden: 3, init_seed: 1 }, 2, 3).unwrap();
        for t in &mut m.params.tensors {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        m.params.tensors.last_mut().unwrap().data = vec![0.5, -1.0, 2.0];
        for s in m.forward(&[pv(&[1.0, 2.0]), pv(&[-3.0, 0.5])]) {
            assert_eq!(s.0, vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BiLstmModel::new(BiLstmConfig { hidden: 0, init_seed: 0 }, 2, 3).is_err());
        let m = BiLstmModel::new(BiLstmConfig { hidden: 2, init_seed: 0 }, 2, 3).unwrap();
        assert!(m.loss_and_grad(&[(vec![vec![1.0]], vec![0])]).is_err());
        assert!(m.loss_and_grad(&[(vec![vec![1.0, 0.0]], vec![0, 1])]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = BiLstmModel::new(BiLstmConfig { hidden: 2, init_seed: 4 }, 3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        m.save(&p).unwrap();
        assert_eq!(BiLstmModel::load(&p).unwrap(), m);
    }
}
