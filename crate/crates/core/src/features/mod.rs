//! Text features: tokenizer, bounded vocabulary, TF-IDF weighting and a truncated SVD
//! projection to fixed-size page vectors.

mod svd;
mod tfidf;
mod tokenize;
mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentSequence;
use crate::{Error, Result};

pub use svd::{fit_svd, SvdProjector, SVD_MAX_ITERS, SVD_TOL};
pub use tfidf::{SparseVec, TfIdfModel};
pub use tokenize::{tokenize, TOKENIZER_VERSION};
pub use vocab::{fit_vocabulary, Vocabulary, DEFAULT_VOCAB_CAP};

/// Default page-vector dimensionality.
pub const DEFAULT_SVD_DIM: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageVector {
    pub values: Vec<f64>,
}

/// Fitted tokenizer + TF-IDF + SVD pipeline, persisted as one JSON artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub tokenizer_version: String,
    pub tfidf: TfIdfModel,
    pub svd: SvdProjector,
}

impl FeatureModel {
    /// Fits vocabulary, idf and the SVD basis on training pages only. `k` is lowered to
    /// the numerical rank of the training matrix when that is smaller.
    pub fn fit(train: &[DocumentSequence], vocab_cap: usize, k: usize, seed: u64) -> Result<Self> {
        let vocabulary = fit_vocabulary(train, vocab_cap)?;
        let tfidf = TfIdfModel::fit(vocabulary, train)?;
        let rows: Vec<SparseVec> = train
            .iter()
            .flat_map(|d| &d.pages)
            .map(|p| tfidf.vector(&p.text))
            .collect();
        let limit = rows.len().min(tfidf.dim());
        let mut k = k.min(limit);
        let svd = loop {
            match fit_svd(&rows, tfidf.dim(), k, seed) {
                Err(Error::RankDeficient { rank, .. }) if rank > 0 => {
                    log::warn!("svd: training matrix rank {rank} < {k}; using k = {rank}");
                    k = rank;
                }
                other => break other?,
            }
        };
        Ok(FeatureModel {
            tokenizer_version: TOKENIZER_VERSION.to_string(),
            tfidf,
            svd,
        })
    }

    pub fn page_vector(&self, text: &str) -> PageVector {
        self.svd.project(&self.tfidf.vector(text))
    }

    pub fn document_vectors(&self, doc: &DocumentSequence) -> Vec<PageVector> {
        doc.pages.iter().map(|p| self.page_vector(&p.text)).collect()
    }

    pub fn dim(&self) -> usize {
        self.svd.k()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: FeatureModel = serde_json::from_str(&text)?;
        if model.tokenizer_version != TOKENIZER_VERSION {
            return Err(Error::InvalidConfig(format!(
                "feature model built with tokenizer {:?}, this build uses {:?}",
                model.tokenizer_version, TOKENIZER_VERSION
            )));
        }
        Ok(model)
    }
}
