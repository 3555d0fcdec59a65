use serde::{Deserialize, Serialize};

use super::bowker::{mcnemar_bowker, ContingencyTable, TestResult};
use super::metrics::{score, PerClassScores};
use crate::corpus::{DocumentSequence, LabelMode, TypeVocabulary};
use crate::recurrence::PredictionTrace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub table: ContingencyTable,
    pub test: TestResult,
    pub scores_a: PerClassScores,
    pub scores_b: PerClassScores,
    /// `f1(B) - f1(A)` per class.
    pub f1_deltas: Vec<f64>,
    pub macro_delta: f64,
    pub weighted_delta: f64,
}

fn check_alignment(trace: &PredictionTrace, doc: &DocumentSequence, which: &str) -> Result<()> {
    if trace.doc_id != doc.doc_id || trace.len() != doc.len() {
        return Err(Error::LengthMismatch(format!(
            "trace {which} has document {} with {} pages where {} with {} pages was expected",
            trace.doc_id,
            trace.len(),
            doc.doc_id,
            doc.len()
        )));
    }
    Ok(())
}

/// Pairs the decisions of two traces page by page. Multiclass tables are indexed by
/// class; multilabel decisions become one 2×2 table over every (page, class) cell.
pub fn compare_traces(
    a: &[PredictionTrace],
    b: &[PredictionTrace],
    golds: &[DocumentSequence],
    vocabulary: &TypeVocabulary,
) -> Result<Comparison> {
    if a.len() != golds.len() || b.len() != golds.len() {
        return Err(Error::LengthMismatch(format!(
            "traces cover {} and {} documents, gold has {}",
            a.len(),
            b.len(),
            golds.len()
        )));
    }
    let mut preds_a = Vec::new();
    let mut preds_b = Vec::new();
    let mut gold = Vec::new();
    for ((ta, tb), doc) in a.iter().zip(b).zip(golds) {
        check_alignment(ta, doc, "A")?;
        check_alignment(tb, doc, "B")?;
        preds_a.extend(ta.decided());
        preds_b.extend(tb.decided());
        gold.extend(doc.label_sets());
    }
    let n = vocabulary.len();
    let table = match vocabulary.label_mode() {
        LabelMode::Multiclass => {
            let pairs = preds_a.iter().zip(&preds_b).map(|(p, q)| (first(p), first(q)));
            ContingencyTable::from_pairs(n, pairs)
        }
        LabelMode::Multilabel => {
            let pairs = preds_a.iter().zip(&preds_b).flat_map(|(p, q)| {
                (0..n).map(move |c| (p.contains(&c) as usize, q.contains(&c) as usize))
            });
            ContingencyTable::from_pairs(2, pairs)
        }
    };
    let test = mcnemar_bowker(&table)?;
    let scores_a = score(&preds_a, &gold, vocabulary)?;
    let scores_b = score(&preds_b, &gold, vocabulary)?;
    let f1_deltas = scores_a.classes.iter().zip(&scores_b.classes).map(|(x, y)| y.f1 - x.f1).collect();
    Ok(Comparison {
        macro_delta: scores_b.macro_f1 - scores_a.macro_f1,
        weighted_delta: scores_b.weighted_f1 - scores_a.weighted_f1,
        table,
        test,
        scores_a,
        scores_b,
        f1_deltas,
    })
}

fn first(labels: &[usize]) -> usize {
    labels.first().copied().unwrap_or(0)
}
