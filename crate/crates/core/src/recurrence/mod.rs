//! Previous-page recurrence: each page's input is prefixed with the page type(s)
//! decided for the page before it (`[-1]` on the first page).
//!
//! Training contexts come from gold labels (teacher forcing), so examples from many
//! documents can be shuffled into batches. Inference is strictly left to right: the
//! context of page `t` is the model's own decision for page `t-1`.

mod trace_io;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentSequence, LabelMode};
use crate::encoder::{predict, PageModel, ScoreVector, TokenSequence, TokenSpace, CLS, FIRST_PAGE};
use crate::features::tokenize;

pub use trace_io::{read_traces, write_traces, TraceLine};

/// What precedes a page: the document start, or the class set decided for the
/// previous page.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrevPageContext {
    FirstPage,
    Labels(Vec<usize>),
}

impl PrevPageContext {
    /// Context from a label set; sorted ascending so token order is canonical.
    pub fn labels(labels: &[usize]) -> Self {
        let mut v = labels.to_vec();
        v.sort_unstable();
        v.dedup();
        assert!(!v.is_empty(), "empty context label set");
        PrevPageContext::Labels(v)
    }

    pub fn tokens(&self, space: &TokenSpace) -> Vec<usize> {
        match self {
            PrevPageContext::FirstPage => vec![FIRST_PAGE],
            PrevPageContext::Labels(ls) => ls.iter().map(|&c| space.special(c)).collect(),
        }
    }
}

/// `[CLS]` followed by `prefix` then the text tokens, truncating text from the right
/// so the total fits `max_len`. Prefix tokens are never dropped.
fn build_sequence(prefix: &[usize], text: &str, space: &TokenSpace, max_len: usize) -> TokenSequence {
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend_from_slice(prefix);
    assert!(ids.len() <= max_len, "max_len {max_len} too small for context prefix");
    let room = max_len - ids.len();
    ids.extend(tokenize(text).iter().take(room).map(|t| space.text_id(t)));
    TokenSequence { ids }
}

pub fn augment_input(context: &PrevPageContext, text: &str, space: &TokenSpace, max_len: usize) -> TokenSequence {
    build_sequence(&context.tokens(space), text, space, max_len)
}

/// Context-free input: `[CLS]` + text.
pub fn plain_input(text: &str, space: &TokenSpace, max_len: usize) -> TokenSequence {
    build_sequence(&[], text, space, max_len)
}

/// One training example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub doc_id: String,
    pub page_index: usize,
    pub context: Option<PrevPageContext>,
    pub sequence: TokenSequence,
    pub gold: Vec<usize>,
}

/// One example per page. With `recurrent`, page `t > 0` is conditioned on the GOLD
/// labels of page `t - 1`.
pub fn build_examples(docs: &[DocumentSequence], space: &TokenSpace, max_len: usize, recurrent: bool) -> Vec<Example> {
    let mut out = Vec::new();
    for doc in docs {
        for (t, page) in doc.pages.iter().enumerate() {
            let (context, sequence) = if recurrent {
                let ctx = if t == 0 {
                    PrevPageContext::FirstPage
                } else {
                    PrevPageContext::labels(&doc.pages[t - 1].gold_labels)
                };
                let seq = augment_input(&ctx, &page.text, space, max_len);
                (Some(ctx), seq)
            } else {
                (None, plain_input(&page.text, space, max_len))
            };
            out.push(Example {
                doc_id: doc.doc_id.clone(),
                page_index: t,
                context,
                sequence,
                gold: page.gold_labels.clone(),
            });
        }
    }
    out
}

/// Shuffles examples across documents and cuts them into batches; the last batch may
/// be short.
pub fn shuffle_into_batches(examples: &[Example], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Example>> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| examples[i].clone()).collect())
        .collect()
}

/// Teacher-forced batches for one epoch.
pub fn build_teacher_forced_batches(
    docs: &[DocumentSequence],
    space: &TokenSpace,
    max_len: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Example>> {
    shuffle_into_batches(&build_examples(docs, space, max_len, true), batch_size, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageStep {
    pub scores: ScoreVector,
    pub labels: Vec<usize>,
    /// Context fed to the model; `None` for context-oblivious inference.
    pub context: Option<PrevPageContext>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub doc_id: String,
    pub steps: Vec<PageStep>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn decided(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|s| s.labels.clone()).collect()
    }

    /// Every recurrent step's context equals the previous step's decision.
    pub fn is_consistent(&self) -> bool {
        self.steps.iter().enumerate().all(|(t, s)| match (&s.context, t) {
            (Some(PrevPageContext::FirstPage), 0) => true,
            (Some(PrevPageContext::Labels(ls)), t) if t > 0 => *ls == self.steps[t - 1].labels,
            (None, _) => true,
            _ => false,
        })
    }
}

/// Sequential recurrent inference: one forward call per page, left to right.
pub fn infer_document<M: PageModel + ?Sized>(model: &M, doc: &DocumentSequence, mode: LabelMode) -> PredictionTrace {
    let space = model.token_space();
    let mut steps: Vec<PageStep> = Vec::with_capacity(doc.len());
    for page in &doc.pages {
        let context = match steps.last() {
            None => PrevPageContext::FirstPage,
            Some(prev) => PrevPageContext::labels(&prev.labels),
        };
        let seq = augment_input(&context, &page.text, space, model.max_len());
        let scores = model.score(&seq);
        let labels = predict(&scores, mode);
        steps.push(PageStep {
            scores,
            labels,
            context: Some(context),
        });
    }
    PredictionTrace {
        doc_id: doc.doc_id.clone(),
        steps,
    }
}

/// Every page scored independently from its own text.
pub fn infer_context_oblivious<M: PageModel + ?Sized>(model: &M, doc: &DocumentSequence, mode: LabelMode) -> PredictionTrace {
    let space = model.token_space();
    let steps = doc
        .pages
        .iter()
        .map(|page| {
            let scores = model.score(&plain_input(&page.text, space, model.max_len()));
            let labels = predict(&scores, mode);
            PageStep {
                scores,
                labels,
                context: None,
            }
        })
        .collect();
    PredictionTrace {
        doc_id: doc.doc_id.clone(),
        steps,
    }
}

/// Runs recurrent or oblivious inference over a set of documents.
pub fn infer_all<M: PageModel + ?Sized>(model: &M, docs: &[DocumentSequence], mode: LabelMode, recurrent: bool) -> Vec<PredictionTrace> {
    docs.iter()
        .map(|d| {
            if recurrent {
                infer_document(model, d, mode)
            } else {
                infer_context_oblivious(model, d, mode)
            }
        })
        .collect()
}
