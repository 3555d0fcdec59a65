//! Trace export: one JSON line per page with scores, decided labels and the context
//! that was fed to the model.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PageStep, PredictionTrace, PrevPageContext};
use crate::corpus::{TypeVocabulary, FIRST_PAGE_TOKEN};
use crate::encoder::ScoreVector;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceLine {
    /// Context tokens (`["[-1]"]`, `["[type_2]", ...]`), absent for oblivious inference.
    pub context: Option<Vec<String>>,
    pub doc_id: String,
    pub labels: Vec<String>,
    pub page_index: usize,
    pub scores: Vec<f64>,
}

fn context_tokens(ctx: &PrevPageContext, vocab: &TypeVocabulary) -> Vec<String> {
    match ctx {
        PrevPageContext::FirstPage => vec![FIRST_PAGE_TOKEN.to_string()],
        PrevPageContext::Labels(ls) => ls.iter().map(|&c| vocab.special_token(c)).collect(),
    }
}

fn parse_context(tokens: &[String], vocab: &TypeVocabulary) -> Option<PrevPageContext> {
    if tokens.len() == 1 && tokens[0] == FIRST_PAGE_TOKEN {
        return Some(PrevPageContext::FirstPage);
    }
    let labels: Option<Vec<usize>> = tokens
        .iter()
        .map(|t| {
            let k: usize = t.strip_prefix("[type_")?.strip_suffix(']')?.parse().ok()?;
            (1..=vocab.len()).contains(&k).then_some(k - 1)
        })
        .collect();
    labels.filter(|l| !l.is_empty()).map(PrevPageContext::Labels)
}

pub fn write_traces(path: &Path, traces: &[PredictionTrace], vocab: &TypeVocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for trace in traces {
        for (t, step) in trace.steps.iter().enumerate() {
            let line = TraceLine {
                context: step.context.as_ref().map(|c| context_tokens(c, vocab)),
                doc_id: trace.doc_id.clone(),
                labels: step.labels.iter().map(|&c| vocab.name(c).to_string()).collect(),
                page_index: t,
                scores: step.scores.0.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads traces back, grouping lines by `doc_id` in order of first appearance.
pub fn read_traces(path: &Path, vocab: &TypeVocabulary) -> Result<Vec<PredictionTrace>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut traces: Vec<PredictionTrace> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: TraceLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let labels = rec
            .labels
            .iter()
            .map(|name| {
                vocab.index_of(name).ok_or_else(|| Error::UnknownLabel {
                    path: path.to_path_buf(),
                    line: i + 1,
                    label: name.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let context = match &rec.context {
            None => None,
            Some(tokens) => Some(parse_context(tokens, vocab).ok_or_else(|| malformed(format!("bad context {tokens:?}")))?),
        };
        if rec.scores.len() != vocab.len() {
            return Err(malformed(format!("{} scores for {} classes", rec.scores.len(), vocab.len())));
        }
        let step = PageStep {
            scores: ScoreVector(rec.scores),
            labels,
            context,
        };
        match traces.iter_mut().rev().find(|t| t.doc_id == rec.doc_id) {
            Some(trace) => {
                if trace.steps.len() != rec.page_index {
                    return Err(malformed(format!("page_index {} out of order", rec.page_index)));
                }
                trace.steps.push(step);
            }
            None => {
                if rec.page_index != 0 {
                    return Err(malformed(format!("document {:?} does not start at page 0", rec.doc_id)));
                }
                traces.push(PredictionTrace {
                    doc_id: rec.doc_id,
                    steps: vec![step],
                });
            }
        }
    }
    Ok(traces)
}
