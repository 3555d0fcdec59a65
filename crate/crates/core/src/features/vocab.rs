use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::DocumentSequence;
use crate::{Error, Result};

pub const DEFAULT_VOCAB_CAP: usize = 60_000;

/// Bounded token vocabulary fitted on training pages.
///
/// Keeps the `cap` tokens with the highest collection frequency; ties are broken
/// lexicographically. Ids follow that order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_pages: usize,
    cap: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    cap: usize,
    doc_freq: Vec<usize>,
    n_pages: usize,
    tokens: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.doc_freq, r.n_pages, r.cap)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            cap: v.cap,
            doc_freq: v.doc_freq,
            n_pages: v.n_pages,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, n_pages: usize, cap: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            doc_freq,
            n_pages,
            cap,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of training pages containing the token.
    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    /// Number of training pages the vocabulary was fitted on.
    pub fn n_pages(&self) -> usize {
        self.n_pages
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

pub fn fit_vocabulary(train: &[DocumentSequence], cap: usize) -> Result<Vocabulary> {
    if cap == 0 {
        return Err(Error::InvalidConfig("vocabulary cap must be >= 1".into()));
    }
    let mut freq: HashMap<String, (usize, usize)> = HashMap::new();
    let mut n_pages = 0;
    for page in train.iter().flat_map(|d| &d.pages) {
        n_pages += 1;
        let mut toks = tokenize(&page.text);
        for t in &toks {
            freq.entry(t.clone()).or_default().0 += 1;
        }
        toks.sort_unstable();
        toks.dedup();
        for t in toks {
            freq.entry(t).or_default().1 += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut entries: Vec<(String, (usize, usize))> = freq.into_iter().collect();
    entries.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(cap);
    let (tokens, doc_freq) = entries.into_iter().map(|(t, (_, df))| (t, df)).unzip();
    Ok(Vocabulary::from_parts(tokens, doc_freq, n_pages, cap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<DocumentSequence> {
        vec![DocumentSequence::from_labeled("d", texts.iter().map(|t| (t.to_string(), 0))).unwrap()]
    }

    #[test]
    fn keeps_most_frequent() {
        let v = fit_vocabulary(&docs(&["a a a b b c"]), 2).unwrap();
        assert_eq!(v.tokens(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn cap_above_distinct_keeps_all() {
        let v = fit_vocabulary(&docs(&["x y", "z"]), 100).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.n_pages(), 2);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = fit_vocabulary(&docs(&["delta beta alpha gamma", "zeta zeta"]), 3).unwrap();
        assert_eq!(v.tokens(), &["zeta", "alpha", "beta"]);
    }

    #[test]
    fn document_frequency_counts_pages() {
        let v = fit_vocabulary(&docs(&["a a", "a b"]), 10).unwrap();
        assert_eq!(v.doc_freq(v.id("a").unwrap()), 2);
        assert_eq!(v.doc_freq(v.id("b").unwrap()), 1);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(fit_vocabulary(&docs(&["", "..."]), 5), Err(Error::EmptyCorpus)));
        assert!(fit_vocabulary(&docs(&["a"]), 0).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = fit_vocabulary(&docs(&["a b c", "c"]), 10).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("c"), Some(0));
    }
}
