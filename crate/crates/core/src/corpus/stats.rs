//! Descriptive corpus statistics: label counts, run lengths, self-transition rates.

use serde::{Deserialize, Serialize};

use super::{CorpusSplit, DocumentSequence, LabelMode, SplitName, TypeVocabulary};
use crate::{Error, Result};

/// Page counts per class for each split; a multi-label page counts once per label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub classes: Vec<String>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn class_page_counts(split: &CorpusSplit) -> ClassCounts {
    let n = split.vocabulary.len();
    let count = |name: SplitName| {
        let mut counts = vec![0usize; n];
        for page in split.get(name).iter().flat_map(|d| &d.pages) {
            for &c in &page.gold_labels {
                counts[c] += 1;
            }
        }
        counts
    };
    ClassCounts {
        classes: split.vocabulary.class_names().to_vec(),
        train: count(SplitName::Train),
        validation: count(SplitName::Validation),
        test: count(SplitName::Test),
    }
}

/// Run-length summary for one class. A run is a maximal block of consecutive pages
/// sharing that label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub class: String,
    /// `None` when the class never occurs.
    pub median_run: Option<f64>,
    pub max_run: usize,
    pub total_pages: usize,
    pub num_runs: usize,
}

fn require_multiclass(docs: &[DocumentSequence], vocabulary: &TypeVocabulary, what: &'static str) -> Result<()> {
    if vocabulary.label_mode() == LabelMode::Multilabel
        || docs.iter().flat_map(|d| &d.pages).any(|p| p.gold_labels.len() != 1)
    {
        return Err(Error::MultilabelUnsupported(what));
    }
    Ok(())
}

fn median(sorted: &[usize]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0),
    }
}

pub fn run_length_stats(docs: &[DocumentSequence], vocabulary: &TypeVocabulary) -> Result<Vec<RunStats>> {
    require_multiclass(docs, vocabulary, "run_length_stats")?;
    let n = vocabulary.len();
    let mut runs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for doc in docs {
        let labels = doc.labels();
        let mut start = 0;
        for t in 1..=labels.len() {
            if t == labels.len() || labels[t] != labels[start] {
                runs[labels[start]].push(t - start);
                start = t;
            }
        }
    }
    Ok(runs
        .into_iter()
        .enumerate()
        .map(|(c, mut lens)| {
            lens.sort_unstable();
            RunStats {
                class: vocabulary.name(c).to_string(),
                median_run: median(&lens),
                max_run: lens.last().copied().unwrap_or(0),
                total_pages: lens.iter().sum(),
                num_runs: lens.len(),
            }
        })
        .collect())
}

/// Probability that a page of class `c` with a successor is followed by class `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTransition {
    pub classes: Vec<String>,
    /// `None` for classes with no non-final pages.
    pub per_class: Vec<Option<f64>>,
    pub with_successor: Vec<usize>,
    pub repeated: Vec<usize>,
    /// Mean over defined classes.
    pub macro_avg: Option<f64>,
}

pub fn transition_self_prob(docs: &[DocumentSequence], vocabulary: &TypeVocabulary) -> Result<SelfTransition> {
    require_multiclass(docs, vocabulary, "transition_self_prob")?;
    let n = vocabulary.len();
    let mut with_successor = vec![0usize; n];
    let mut repeated = vec![0usize; n];
    for doc in docs {
        for pair in doc.labels().windows(2) {
            with_successor[pair[0]] += 1;
            if pair[0] == pair[1] {
                repeated[pair[0]] += 1;
            }
        }
    }
    let per_class: Vec<Option<f64>> = with_successor
        .iter()
        .zip(&repeated)
        .map(|(&s, &r)| (s > 0).then(|| r as f64 / s as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_avg = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(SelfTransition {
        classes: vocabulary.class_names().to_vec(),
        per_class,
        with_successor,
        repeated,
        macro_avg,
    })
}
