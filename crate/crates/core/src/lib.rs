//! Context-aware page-type classification.
//!
//! Pages of a document are classified one at a time, with the type decided for the
//! previous page prepended to the input as a special token (`[type_c]`, or `[-1]` on
//! the first page). Training uses gold previous-page labels (teacher forcing) so pages
//! can be batched; inference is strictly sequential within a document.
//!
//! Modules:
//! - [`corpus`]: page/document data model, JSONL ingestion, synthetic Markov corpora, statistics
//! - [`features`]: tokenizer, bounded vocabulary, TF-IDF and truncated SVD page vectors
//! - [`encoder`]: small trainable page scorers (bag-of-embeddings and a tiny transformer)
//! - [`recurrence`]: input augmentation, teacher-forced batches, sequential inference
//! - [`training`]: AdamW, linear warmup/decay schedule, training loop
//! - [`seqbaselines`]: linear-chain CRF over frozen scores and a BiLSTM over page vectors
//! - [`eval`]: per-class/macro/weighted F1 and the McNemar-Bowker symmetry test

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod params;
pub mod recurrence;
pub mod seqbaselines;
pub mod training;

pub use error::{Error, Result};

/// Version string embedded in every persisted artifact.
pub const TOOLKIT_VERSION: &str = concat!("pagectx/", env!("CARGO_PKG_VERSION"));
