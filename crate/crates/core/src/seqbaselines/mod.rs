//! Context-aware baselines that do not feed labels back into the page encoder: a
//! linear-chain CRF over a frozen model's saved scores, and a bidirectional LSTM over
//! TF-IDF/SVD page vectors.

pub mod bilstm;
pub mod crf;
pub mod saved;

pub use bilstm::{bilstm_forward, bilstm_train, BiLstmConfig, BiLstmModel, BiLstmOutcome};
pub use crf::{
    crf_decode_all, crf_fit, crf_log_forward, crf_marginals, crf_objective, crf_path_score, crf_viterbi, CrfFit,
    CrfFitConfig, CrfMarginals, CrfModel, ScoreSequence,
};
pub use saved::{read_saved_predictions, write_saved_predictions, SavedDocument, SavedPrediction};
