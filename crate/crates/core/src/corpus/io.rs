//! JSONL page files and the split manifest.
//!
//! One page per line: `{"doc_id": str, "labels": [str], "page_index": int, "text": str}`.
//! Keys are written in sorted order so files are byte-stable.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusSplit, DocumentSequence, LabelMode, PageRecord, SplitName, TypeVocabulary};
use crate::{Error, Result};

/// Wire form of one page. Field order is alphabetical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageLine {
    pub doc_id: String,
    pub labels: Vec<String>,
    pub page_index: usize,
    pub text: String,
}

/// Split manifest: class list plus the three JSONL paths (relative to the manifest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    #[serde(default)]
    pub label_mode: LabelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
    pub test: PathBuf,
    pub train: PathBuf,
    pub validation: PathBuf,
}

impl Manifest {
    pub fn vocabulary(&self) -> Result<TypeVocabulary> {
        TypeVocabulary::new(self.classes.iter().cloned(), self.label_mode)
    }

    fn path_of(&self, name: SplitName) -> &Path {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Loads and validates all three splits named by the manifest at `path`.
pub fn load_corpus(path: &Path, vocabulary: &TypeVocabulary) -> Result<CorpusSplit> {
    let manifest = load_manifest(path)?;
    if manifest.classes != vocabulary.class_names() || manifest.label_mode != vocabulary.label_mode() {
        return Err(Error::InvalidVocabulary(format!(
            "manifest {} declares classes {:?} ({:?}), expected {:?} ({:?})",
            path.display(),
            manifest.classes,
            manifest.label_mode,
            vocabulary.class_names(),
            vocabulary.label_mode()
        )));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let read = |name| read_documents(&base.join(manifest.path_of(name)), vocabulary);
    CorpusSplit::new(
        read(SplitName::Train)?,
        read(SplitName::Validation)?,
        read(SplitName::Test)?,
        vocabulary.clone(),
    )
}

/// Reads one JSONL page file. Documents appear in order of first occurrence.
pub fn read_documents(path: &Path, vocabulary: &TypeVocabulary) -> Result<Vec<DocumentSequence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<PageRecord>> = HashMap::new();
    let mut seen: HashSet<(String, usize)> = HashSet::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let rec: PageLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if rec.labels.is_empty() {
            return Err(malformed("empty label list".into()));
        }
        if vocabulary.label_mode() == LabelMode::Multiclass && rec.labels.len() != 1 {
            return Err(malformed(format!("{} labels on a multiclass page", rec.labels.len())));
        }
        let mut labels = Vec::with_capacity(rec.labels.len());
        for name in &rec.labels {
            let idx = vocabulary.index_of(name).ok_or_else(|| Error::UnknownLabel {
                path: path.to_path_buf(),
                line: lineno,
                label: name.clone(),
            })?;
            labels.push(idx);
        }
        if !seen.insert((rec.doc_id.clone(), rec.page_index)) {
            return Err(Error::DuplicatePage {
                path: path.to_path_buf(),
                line: lineno,
                doc_id: rec.doc_id,
                page_index: rec.page_index,
            });
        }
        let entry = grouped.entry(rec.doc_id.clone()).or_insert_with(|| {
            order.push(rec.doc_id.clone());
            Vec::new()
        });
        entry.push(PageRecord::new(rec.doc_id, rec.page_index, rec.text, labels));
    }

    order
        .into_iter()
        .map(|doc_id| {
            let mut pages = grouped.remove(&doc_id).unwrap_or_default();
            pages.sort_by_key(|p| p.page_index);
            DocumentSequence::new(doc_id, pages)
        })
        .collect()
}

pub fn write_documents(path: &Path, docs: &[DocumentSequence], vocabulary: &TypeVocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        for page in &doc.pages {
            let line = PageLine {
                doc_id: page.doc_id.clone(),
                labels: page.gold_labels.iter().map(|&c| vocabulary.name(c).to_string()).collect(),
                page_index: page.page_index,
                text: page.text.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and `manifest.json` into
/// `dir`, returning the manifest path.
pub fn write_corpus(split: &CorpusSplit, dir: &Path, provenance: Option<serde_json::Value>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for name in SplitName::ALL {
        let file = dir.join(format!("{}.jsonl", name.as_str()));
        write_documents(&file, split.get(name), &split.vocabulary)?;
    }
    let manifest = Manifest {
        classes: split.vocabulary.class_names().to_vec(),
        label_mode: split.vocabulary.label_mode(),
        provenance,
        test: "test.jsonl".into(),
        train: "train.jsonl".into(),
        validation: "validation.jsonl".into(),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
