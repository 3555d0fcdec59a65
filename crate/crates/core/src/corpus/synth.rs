//! Synthetic corpora: per-document Markov chains over page types with bag-of-token pages.
//!
//! Class `c` owns the tokens `c<c>_w<k>`; the shared, class-uninformative pool is
//! `sh_w<k>`. Each token of a page is drawn from the shared pool with probability
//! `ambiguity` and from the page's class pool otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusSplit, DocumentSequence, LabelMode, PageRecord, TypeVocabulary};
use crate::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    /// `transition_matrix[i][j]`: probability the next page is class `j` given class `i`.
    pub transition_matrix: Vec<Vec<f64>>,
    pub start_distribution: Vec<f64>,
    pub pages_per_doc: (usize, usize),
    pub class_vocab_size: usize,
    pub shared_vocab_size: usize,
    pub ambiguity: f64,
    pub tokens_per_page: (usize, usize),
    pub docs_per_split: (usize, usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub seed: u64,
}

impl SynthConfig {
    /// Uniform start, self-transition `self_prob`, remaining mass spread evenly.
    pub fn with_self_transition(n_classes: usize, self_prob: f64, ambiguity: f64, seed: u64) -> Self {
        let off = if n_classes > 1 {
            (1.0 - self_prob) / (n_classes - 1) as f64
        } else {
            0.0
        };
        let transition_matrix = (0..n_classes)
            .map(|i| (0..n_classes).map(|j| if i == j { self_prob } else { off }).collect())
            .collect();
        SynthConfig {
            n_classes,
            transition_matrix,
            start_distribution: vec![1.0 / n_classes as f64; n_classes],
            pages_per_doc: (4, 12),
            class_vocab_size: 30,
            shared_vocab_size: 40,
            ambiguity,
            tokens_per_page: (3, 6),
            docs_per_split: (120, 30, 60),
            class_names: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let n = self.n_classes;
        if n < 2 {
            return bad(format!("n_classes must be >= 2, got {n}"));
        }
        if self.transition_matrix.len() != n || self.transition_matrix.iter().any(|r| r.len() != n) {
            return bad(format!("transition_matrix must be {n}x{n}"));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return bad(format!("transition row {i} has a negative or non-finite entry"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return bad(format!("transition row {i} sums to {s}"));
            }
        }
        if self.start_distribution.len() != n
            || self.start_distribution.iter().any(|p| !p.is_finite() || *p < 0.0)
        {
            return bad("start_distribution must be a length-n non-negative vector".into());
        }
        let s: f64 = self.start_distribution.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("start_distribution sums to {s}"));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return bad(format!("ambiguity {} outside [0, 1]", self.ambiguity));
        }
        for (name, (lo, hi)) in [("pages_per_doc", self.pages_per_doc), ("tokens_per_page", self.tokens_per_page)] {
            if lo < 1 || hi < lo {
                return bad(format!("{name} range ({lo}, {hi}) invalid"));
            }
        }
        if self.class_vocab_size < 1 || self.shared_vocab_size < 1 {
            return bad("vocabulary sizes must be >= 1".into());
        }
        if let Some(names) = &self.class_names {
            if names.len() != n {
                return bad(format!("{} class names for {n} classes", names.len()));
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<TypeVocabulary> {
        let names = match &self.class_names {
            Some(names) => names.clone(),
            None => (1..=self.n_classes).map(|c| format!("type_{c}")).collect(),
        };
        TypeVocabulary::new(names, LabelMode::Multiclass)
    }
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last class with non-zero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn page_text(class: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(cfg.tokens_per_page.0..=cfg.tokens_per_page.1);
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.gen::<f64>() < cfg.ambiguity {
            words.push(format!("sh_w{}", rng.gen_range(0..cfg.shared_vocab_size)));
        } else {
            words.push(format!("c{class}_w{}", rng.gen_range(0..cfg.class_vocab_size)));
        }
    }
    words.join(" ")
}

fn generate_docs(prefix: &str, count: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<DocumentSequence>> {
    (0..count)
        .map(|d| {
            let doc_id = format!("{prefix}-{d:05}");
            let len = rng.gen_range(cfg.pages_per_doc.0..=cfg.pages_per_doc.1);
            let mut class = sample_categorical(&cfg.start_distribution, rng);
            let mut pages = Vec::with_capacity(len);
            for t in 0..len {
                if t > 0 {
                    class = sample_categorical(&cfg.transition_matrix[class], rng);
                }
                let text = page_text(class, cfg, rng);
                pages.push(PageRecord::new(doc_id.clone(), t, text, [class]));
            }
            DocumentSequence::new(doc_id, pages)
        })
        .collect()
}

/// Generates train/validation/test splits; a pure function of `cfg` (seed included).
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<CorpusSplit> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n_train, n_val, n_test) = cfg.docs_per_split;
    let train = generate_docs("train", n_train, cfg, &mut rng)?;
    let validation = generate_docs("validation", n_val, cfg, &mut rng)?;
    let test = generate_docs("test", n_test, cfg, &mut rng)?;
    CorpusSplit::new(train, validation, test, cfg.vocabulary()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_chain_gives_single_class_documents() {
        let mut cfg = SynthConfig::with_self_transition(3, 1.0, 0.5, 4);
        cfg.docs_per_split = (20, 5, 5);
        let split = generate_synthetic(&cfg).unwrap();
        for doc in split.train.iter().chain(&split.test) {
            let labels = doc.labels();
            assert!(labels.iter().all(|&c| c == labels[0]));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig::with_self_transition(4, 0.7, 0.3, 11);
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 12;
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut cfg = SynthConfig::with_self_transition(3, 0.8, 0.0, 0);
        cfg.transition_matrix[1][1] = 0.5;
        assert!(matches!(generate_synthetic(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = SynthConfig::with_self_transition(3, 0.8, 1.5, 0);
        assert!(cfg.validate().is_err());
        cfg.ambiguity = 0.1;
        cfg.tokens_per_page = (0, 3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_ambiguity_pages_use_only_their_class_pool() {
        let mut cfg = SynthConfig::with_self_transition(3, 0.6, 0.0, 9);
        cfg.docs_per_split = (30, 0, 0);
        let split = generate_synthetic(&cfg).unwrap();
        for page in split.train.iter().flat_map(|d| &d.pages) {
            let prefix = format!("c{}_", page.label());
            assert!(page.text.split(' ').all(|w| w.starts_with(&prefix)));
        }
    }
}
