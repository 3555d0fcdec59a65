use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, Vocabulary};
use crate::corpus::DocumentSequence;
use crate::Result;

/// Sparse vector as `(id, value)` pairs sorted by id.
pub type SparseVec = Vec<(usize, f64)>;

/// TF-IDF weighting with smoothed idf `ln((1 + N) / (1 + df)) + 1` and L2-normalized
/// output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
}

impl TfIdfModel {
    /// Idf computed from the vocabulary's document frequencies. `train` must be the
    /// split the vocabulary was fitted on; only its page count is used.
    pub fn fit(vocabulary: Vocabulary, train: &[DocumentSequence]) -> Result<Self> {
        let n = train.iter().map(DocumentSequence::len).sum::<usize>() as f64;
        debug_assert_eq!(n as usize, vocabulary.n_pages());
        let idf = (0..vocabulary.len())
            .map(|id| ((1.0 + n) / (1.0 + vocabulary.doc_freq(id) as f64)).ln() + 1.0)
            .collect();
        Ok(TfIdfModel { vocabulary, idf })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Raw-count tf times idf, L2-normalized unless all zero. OOV tokens are ignored.
    pub fn vector(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(id) = self.vocabulary.id(&tok) {
                *counts.entry(id).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(id, tf)| (id, tf * self.idf[id])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }
}
