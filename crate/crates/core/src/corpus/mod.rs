//! Page and document data model, JSONL ingestion, synthetic corpora and descriptive
//! statistics.

mod io;
mod stats;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_corpus, load_manifest, read_documents, write_corpus, write_documents, Manifest, PageLine};
pub use stats::{
    class_page_counts, run_length_stats, transition_self_prob, ClassCounts, RunStats, SelfTransition,
};
pub use synth::{generate_synthetic, SynthConfig};

/// Token prepended to the first page of every document.
pub const FIRST_PAGE_TOKEN: &str = "[-1]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Multiclass,
    Multilabel,
}

/// The `n` page-type classes and their special tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeVocabulary {
    class_names: Vec<String>,
    label_mode: LabelMode,
}

impl TypeVocabulary {
    pub fn new<S: Into<String>>(
        class_names: impl IntoIterator<Item = S>,
        label_mode: LabelMode,
    ) -> Result<Self> {
        let class_names: Vec<String> = class_names.into_iter().map(Into::into).collect();
        if class_names.len() < 2 {
            return Err(Error::InvalidVocabulary(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &class_names {
            if name.is_empty() {
                return Err(Error::InvalidVocabulary("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidVocabulary(format!("duplicate class name {name:?}")));
            }
        }
        Ok(TypeVocabulary {
            class_names,
            label_mode,
        })
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// `[type_k]` with `k` the 1-based class number.
    pub fn special_token(&self, class: usize) -> String {
        assert!(class < self.len(), "class index {class} out of range");
        format!("[type_{}]", class + 1)
    }

    pub fn first_page_token(&self) -> &'static str {
        FIRST_PAGE_TOKEN
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub doc_id: String,
    pub page_index: usize,
    pub text: String,
    /// Sorted, deduplicated class indices.
    pub gold_labels: Vec<usize>,
}

impl PageRecord {
    pub fn new(doc_id: impl Into<String>, page_index: usize, text: impl Into<String>, labels: impl IntoIterator<Item = usize>) -> Self {
        let mut gold_labels: Vec<usize> = labels.into_iter().collect();
        gold_labels.sort_unstable();
        gold_labels.dedup();
        PageRecord {
            doc_id: doc_id.into(),
            page_index,
            text: text.into(),
            gold_labels,
        }
    }

    /// The single label of a multiclass page.
    pub fn label(&self) -> usize {
        self.gold_labels[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSequence {
    pub doc_id: String,
    pub pages: Vec<PageRecord>,
}

impl DocumentSequence {
    /// Validates page order, ownership and label sets.
    pub fn new(doc_id: impl Into<String>, pages: Vec<PageRecord>) -> Result<Self> {
        let doc = DocumentSequence {
            doc_id: doc_id.into(),
            pages,
        };
        doc.check()?;
        Ok(doc)
    }

    /// Builds a multiclass document from `(text, label)` pairs.
    pub fn from_labeled(doc_id: &str, pages: impl IntoIterator<Item = (String, usize)>) -> Result<Self> {
        let pages = pages
            .into_iter()
            .enumerate()
            .map(|(i, (text, label))| PageRecord::new(doc_id, i, text, [label]))
            .collect();
        DocumentSequence::new(doc_id, pages)
    }

    fn check(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidDocument {
            doc_id: self.doc_id.clone(),
            message,
        };
        if self.pages.is_empty() {
            return Err(bad("document has no pages".into()));
        }
        for (i, page) in self.pages.iter().enumerate() {
            if page.page_index != i {
                return Err(bad(format!("expected page_index {i}, found {}", page.page_index)));
            }
            if page.doc_id != self.doc_id {
                return Err(bad(format!("page {i} belongs to {:?}", page.doc_id)));
            }
            if page.gold_labels.is_empty() {
                return Err(bad(format!("page {i} has no labels")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Multiclass label sequence.
    pub fn labels(&self) -> Vec<usize> {
        self.pages.iter().map(PageRecord::label).collect()
    }

    pub fn label_sets(&self) -> Vec<Vec<usize>> {
        self.pages.iter().map(|p| p.gold_labels.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<DocumentSequence>,
    pub validation: Vec<DocumentSequence>,
    pub test: Vec<DocumentSequence>,
    pub vocabulary: TypeVocabulary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "valid" | "dev" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

impl CorpusSplit {
    pub fn new(
        train: Vec<DocumentSequence>,
        validation: Vec<DocumentSequence>,
        test: Vec<DocumentSequence>,
        vocabulary: TypeVocabulary,
    ) -> Result<Self> {
        let split = CorpusSplit {
            train,
            validation,
            test,
            vocabulary,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn get(&self, name: SplitName) -> &[DocumentSequence] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Checks label ranges, label cardinality and per-split doc_id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let n = self.vocabulary.len();
        for name in SplitName::ALL {
            let mut ids = HashSet::new();
            for doc in self.get(name) {
                doc.check()?;
                if !ids.insert(doc.doc_id.as_str()) {
                    return Err(Error::InvalidDocument {
                        doc_id: doc.doc_id.clone(),
                        message: format!("duplicate doc_id in {} split", name.as_str()),
                    });
                }
                for page in &doc.pages {
                    if let Some(&bad) = page.gold_labels.iter().find(|&&c| c >= n) {
                        return Err(Error::InvalidDocument {
                            doc_id: doc.doc_id.clone(),
                            message: format!("label index {bad} >= {n}"),
                        });
                    }
                    if self.vocabulary.label_mode() == LabelMode::Multiclass && page.gold_labels.len() != 1 {
                        return Err(Error::InvalidDocument {
                            doc_id: doc.doc_id.clone(),
                            message: format!("page {} has {} labels in multiclass mode", page.page_index, page.gold_labels.len()),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn page_count(&self, name: SplitName) -> usize {
        self.get(name).iter().map(DocumentSequence::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_rejects_bad_names() {
        assert!(TypeVocabulary::new(["a"], LabelMode::Multiclass).is_err());
        assert!(TypeVocabulary::new(["a", "a"], LabelMode::Multiclass).is_err());
        assert!(TypeVocabulary::new(["a", ""], LabelMode::Multiclass).is_err());
    }

    #[test]
    fn special_tokens_are_distinct() {
        let v = TypeVocabulary::new(["Caption", "Body", "Signature"], LabelMode::Multiclass).unwrap();
        let toks: HashSet<String> = (0..3).map(|c| v.special_token(c)).collect();
        assert_eq!(toks.len(), 3);
        assert!(!toks.contains(v.first_page_token()));
        assert_eq!(v.special_token(0), "[type_1]");
    }

    #[test]
    fn document_requires_dense_indices() {
        let pages = vec![PageRecord::new("d", 0, "x", [0]), PageRecord::new("d", 2, "y", [1])];
        assert!(DocumentSequence::new("d", pages).is_err());
        assert!(DocumentSequence::new("d", vec![]).is_err());
    }

    #[test]
    fn split_rejects_multi_labels_in_multiclass_mode() {
        let v = TypeVocabulary::new(["a", "b"], LabelMode::Multiclass).unwrap();
        let doc = DocumentSequence::new("d", vec![PageRecord::new("d", 0, "x", [0, 1])]).unwrap();
        assert!(CorpusSplit::new(vec![doc], vec![], vec![], v).is_err());
    }
}
