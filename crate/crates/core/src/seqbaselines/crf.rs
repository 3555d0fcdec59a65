use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::ScoreVector;
use crate::linalg::{argmax, log_softmax, log_sum_exp};
use crate::recurrence::{PageStep, PredictionTrace};
use crate::{Error, Result};

pub const CRF_CHECKPOINT_FORMAT: &str = "pagectx-crf/1";

/// Per-page log-probabilities of a frozen classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSequence {
    pub emissions: Vec<Vec<f64>>,
}

impl ScoreSequence {
    /// Log-softmax of each page's logits.
    pub fn from_logits<'a>(logits: impl IntoIterator<Item = &'a [f64]>) -> Self {
        ScoreSequence {
            emissions: logits.into_iter().map(log_softmax).collect(),
        }
    }

    pub fn from_scores(scores: &[ScoreVector]) -> Self {
        Self::from_logits(scores.iter().map(|s| s.0.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.emissions.is_empty() {
            return Err(Error::Shape("empty score sequence".into()));
        }
        for (t, e) in self.emissions.iter().enumerate() {
            if e.len() != n {
                return Err(Error::Shape(format!("page {t} has {} scores, expected {n}", e.len())));
            }
            if e.iter().any(|x| !x.is_finite()) {
                return Err(Error::Shape(format!("page {t} has non-finite scores")));
            }
        }
        Ok(())
    }
}

/// Linear-chain CRF. `transition[i * n + j]` scores label `j` following label `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub n: usize,
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub emission_scale: f64,
}

impl CrfModel {
    /// Zero transitions and start scores, unit emission scale.
    pub fn new(n: usize) -> Self {
        CrfModel {
            n,
            transition: vec![0.0; n * n],
            start: vec![0.0; n],
            emission_scale: 1.0,
        }
    }

    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.n + j]
    }

    pub fn is_finite(&self) -> bool {
        self.emission_scale.is_finite() && self.transition.iter().chain(&self.start).all(|x| x.is_finite())
    }

    /// Parameters flattened as `[transition.., start.., emission_scale]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.transition.clone();
        v.extend(&self.start);
        v.push(self.emission_scale);
        v
    }

    pub fn from_flat(n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), n * n + n + 1);
        CrfModel {
            n,
            transition: v[..n * n].to_vec(),
            start: v[n * n..n * n + n].to_vec(),
            emission_scale: v[n * n + n],
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let v = serde_json::json!({ "format": CRF_CHECKPOINT_FORMAT, "crf": self });
        std::fs::write(path, serde_json::to_string(&v)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Ckpt {
            format: String,
            crf: CrfModel,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Ckpt = serde_json::from_str(&text)?;
        if ckpt.format != CRF_CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        let m = ckpt.crf;
        if m.transition.len() != m.n * m.n || m.start.len() != m.n || !m.is_finite() {
            return Err(Error::Shape("inconsistent CRF checkpoint".into()));
        }
        Ok(m)
    }

    fn emissions(&self, seq: &ScoreSequence) -> Vec<Vec<f64>> {
        seq.emissions
            .iter()
            .map(|e| e.iter().map(|x| self.emission_scale * x).collect())
            .collect()
    }
}

pub fn crf_path_score(model: &CrfModel, seq: &ScoreSequence, labels: &[usize]) -> f64 {
    let s = model.emission_scale;
    let mut score = model.start[labels[0]];
    for (t, &y) in labels.iter().enumerate() {
        score += s * seq.emissions[t][y];
        if t > 0 {
            score += model.t(labels[t - 1], y);
        }
    }
    score
}

fn forward_table(model: &CrfModel, em: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = model.n;
    let mut alpha = Vec::with_capacity(em.len());
    alpha.push((0..n).map(|j| model.start[j] + em[0][j]).collect::<Vec<f64>>());
    let mut buf = vec![0.0; n];
    for e in &em[1..] {
        let prev = alpha.last().unwrap();
        let row: Vec<f64> = (0..n)
            .map(|j| {
                for i in 0..n {
                    buf[i] = prev[i] + model.t(i, j);
                }
                e[j] + log_sum_exp(&buf)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward_table(model: &CrfModel, em: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = model.n;
    let l = em.len();
    let mut beta = vec![vec![0.0; n]; l];
    let mut buf = vec![0.0; n];
    for t in (0..l - 1).rev() {
        for i in 0..n {
            for j in 0..n {
                buf[j] = model.t(i, j) + em[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

/// Log partition function over all `n^l` label paths.
pub fn crf_log_forward(model: &CrfModel, seq: &ScoreSequence) -> f64 {
    let em = model.emissions(seq);
    log_sum_exp(forward_table(model, &em).last().unwrap())
}

/// Highest-scoring path and its score. Backpointers prefer the lower label on ties.
pub fn crf_viterbi(model: &CrfModel, seq: &ScoreSequence) -> (Vec<usize>, f64) {
    let n = model.n;
    let em = model.emissions(seq);
    let l = em.len();
    let mut delta: Vec<f64> = (0..n).map(|j| model.start[j] + em[0][j]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(l);
    for e in &em[1..] {
        let mut next = vec![0.0; n];
        let mut bp = vec![0; n];
        for j in 0..n {
            let mut best = 0;
            let mut best_v = delta[0] + model.t(0, j);
            for i in 1..n {
                let v = delta[i] + model.t(i, j);
                if v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            next[j] = best_v + e[j];
            bp[j] = best;
        }
        back.push(bp);
        delta = next;
    }
    let last = argmax(&delta);
    let score = delta[last];
    let mut path = vec![last; l];
    for t in (1..l).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    (path, score)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfMarginals {
    /// `unary[t][j] = P(y_t = j)`.
    pub unary: Vec<Vec<f64>>,
    /// `pairwise[t - 1][i * n + j] = P(y_{t-1} = i, y_t = j)` for `t ≥ 1`.
    pub pairwise: Vec<Vec<f64>>,
    pub log_z: f64,
}

pub fn crf_marginals(model: &CrfModel, seq: &ScoreSequence) -> CrfMarginals {
    let n = model.n;
    let em = model.emissions(seq);
    let alpha = forward_table(model, &em);
    let beta = backward_table(model, &em);
    let log_z = log_sum_exp(alpha.last().unwrap());
    let unary = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (0..n).map(|j| (a[j] + b[j] - log_z).exp()).collect())
        .collect();
    let pairwise = (1..em.len())
        .map(|t| {
            let mut p = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] = (alpha[t - 1][i] + model.t(i, j) + em[t][j] + beta[t][j] - log_z).exp();
                }
            }
            p
        })
        .collect();
    CrfMarginals { unary, pairwise, log_z }
}

fn check_data(n: usize, data: &[(ScoreSequence, Vec<usize>)]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for (k, (seq, gold)) in data.iter().enumerate() {
        seq.check(n)?;
        if gold.len() != seq.len() {
            return Err(Error::LengthMismatch(format!(
                "sequence {k}: {} labels for {} pages",
                gold.len(),
                seq.len()
            )));
        }
        if let Some(&y) = gold.iter().find(|&&y| y >= n) {
            return Err(Error::Shape(format!("sequence {k}: label {y} outside 0..{n}")));
        }
    }
    Ok(())
}

/// Penalized log-likelihood `Σ [score(gold) − log Z] − l2·(‖T‖² + ‖start‖²)` and its
/// gradient, laid out like the model.
pub fn crf_objective(model: &CrfModel, data: &[(ScoreSequence, Vec<usize>)], l2: f64) -> (f64, CrfModel) {
    let n = model.n;
    let mut grad = CrfModel {
        n,
        transition: vec![0.0; n * n],
        start: vec![0.0; n],
        emission_scale: 0.0,
    };
    let mut value = 0.0;
    for (seq, gold) in data {
        let m = crf_marginals(model, seq);
        value += crf_path_score(model, seq, gold) - m.log_z;
        grad.start[gold[0]] += 1.0;
        for j in 0..n {
            grad.start[j] -= m.unary[0][j];
        }
        for (t, &y) in gold.iter().enumerate() {
            let e = &seq.emissions[t];
            grad.emission_scale += e[y] - m.unary[t].iter().zip(e).map(|(p, x)| p * x).sum::<f64>();
            if t > 0 {
                grad.transition[gold[t - 1] * n + y] += 1.0;
                for (g, p) in grad.transition.iter_mut().zip(&m.pairwise[t - 1]) {
                    *g -= p;
                }
            }
        }
    }
    for (g, w) in grad
        .transition
        .iter_mut()
        .zip(&model.transition)
        .chain(grad.start.iter_mut().zip(&model.start))
    {
        value -= l2 * w * w;
        *g -= 2.0 * l2 * w;
    }
    (value, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfFitConfig {
    pub l2: f64,
    /// Stop when the objective improves by less than `tolerance · max(1, |objective|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CrfFitConfig {
    fn default() -> Self {
        CrfFitConfig {
            l2: 0.1,
            tolerance: 1e-6,
            max_iterations: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfFit {
    pub model: CrfModel,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient ascent with backtracking (Armijo) line search from the zero model. The
/// emission scale is kept strictly positive by rejecting steps that cross zero.
pub fn crf_fit(n: usize, data: &[(ScoreSequence, Vec<usize>)], cfg: &CrfFitConfig) -> Result<CrfFit> {
    if n == 0 {
        return Err(Error::InvalidConfig("CRF needs at least one label".into()));
    }
    if !(cfg.l2 >= 0.0 && cfg.l2.is_finite()) || !(cfg.tolerance > 0.0) || cfg.max_iterations == 0 {
        return Err(Error::InvalidConfig(format!("invalid CRF fit settings {cfg:?}")));
    }
    check_data(n, data)?;
    let mut theta = CrfModel::new(n).to_flat();
    let (mut f, g) = crf_objective(&CrfModel::from_flat(n, &theta), data, cfg.l2);
    let mut grad = g.to_flat();
    let mut step = 1.0 / (1.0 + data.iter().map(|(s, _)| s.len()).sum::<usize>() as f64);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            if cand[n * n + n] > 0.0 {
                let m = CrfModel::from_flat(n, &cand);
                let (fc, gc) = crf_objective(&m, data, cfg.l2);
                if fc.is_finite() && fc >= f + 1e-4 * step * gnorm2 {
                    accepted = Some((cand, fc, gc.to_flat()));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            // no ascent step left at machine precision: stationary
            converged = true;
            break;
        };
        let improvement = fc - f;
        theta = cand;
        f = fc;
        grad = gc;
        step *= 2.0;
        if improvement <= cfg.tolerance * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("CRF fit stopped after {iterations} iterations without reaching tolerance");
    }
    let model = CrfModel::from_flat(n, &theta);
    if !model.is_finite() {
        return Err(Error::NonConvergence {
            what: "crf_fit",
            iterations,
            residual: f64::NAN,
        });
    }
    Ok(CrfFit {
        model,
        objective: f,
        iterations,
        converged,
    })
}

/// Viterbi decoding of every document; step scores are the log marginals.
pub fn crf_decode_all(model: &CrfModel, docs: &[(String, ScoreSequence)]) -> Vec<PredictionTrace> {
    docs.iter()
        .map(|(doc_id, seq)| {
            let (path, _) = crf_viterbi(model, seq);
            let m = crf_marginals(model, seq);
            let steps = path
                .iter()
                .zip(&m.unary)
                .map(|(&y, p)| PageStep {
                    scores: ScoreVector(p.iter().map(|x| x.ln()).collect()),
                    labels: vec![y],
                    context: None,
                })
                .collect();
            PredictionTrace {
                doc_id: doc_id.clone(),
                steps,
            }
        })
        .collect()
}
