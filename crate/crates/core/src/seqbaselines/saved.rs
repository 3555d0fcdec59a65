//! Saved per-page logits of a frozen checkpoint, the input of the CRF baseline.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crf::ScoreSequence;
use crate::recurrence::PredictionTrace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedPrediction {
    pub checkpoint_id: String,
    pub doc_id: String,
    pub logits: Vec<f64>,
    pub page_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavedDocument {
    pub doc_id: String,
    pub logits: Vec<Vec<f64>>,
}

impl SavedDocument {
    pub fn score_sequence(&self) -> ScoreSequence {
        ScoreSequence::from_logits(self.logits.iter().map(Vec::as_slice))
    }
}

pub fn write_saved_predictions(path: &Path, checkpoint_id: &str, traces: &[PredictionTrace]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for trace in traces {
        for (t, step) in trace.steps.iter().enumerate() {
            let rec = SavedPrediction {
                checkpoint_id: checkpoint_id.to_string(),
                doc_id: trace.doc_id.clone(),
                logits: step.scores.0.clone(),
                page_index: t,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Returns the checkpoint id and the documents in order of first appearance. All
/// lines must come from one checkpoint and pages must be contiguous from 0.
pub fn read_saved_predictions(path: &Path) -> Result<(String, Vec<SavedDocument>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut checkpoint: Option<String> = None;
    let mut docs: Vec<SavedDocument> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = Default::default();
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
        let rec: SavedPrediction = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        match &checkpoint {
            None => checkpoint = Some(rec.checkpoint_id.clone()),
            Some(c) if *c != rec.checkpoint_id => {
                return Err(malformed(format!("checkpoint {:?} mixed with {:?}", rec.checkpoint_id, c)));
            }
            _ => {}
        }
        let k = *index.entry(rec.doc_id.clone()).or_insert_with(|| {
            docs.push(SavedDocument {
                doc_id: rec.doc_id.clone(),
                logits: Vec::new(),
            });
            docs.len() - 1
        });
        let doc = &mut docs[k];
        if rec.page_index != doc.logits.len() {
            return Err(malformed(format!(
                "document {} expected page {}, found {}",
                rec.doc_id,
                doc.logits.len(),
                rec.page_index
            )));
        }
        doc.logits.push(rec.logits);
    }
    let checkpoint = checkpoint.ok_or(Error::EmptyCorpus)?;
    Ok((checkpoint, docs))
}
