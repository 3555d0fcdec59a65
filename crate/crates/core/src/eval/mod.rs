//! Evaluation: per-class precision/recall/F1 with macro and support-weighted
//! averages, the McNemar-Bowker symmetry test, and paired trace comparison.

mod bowker;
mod compare;
mod metrics;
mod report;

pub use bowker::{chi_square_sf, mcnemar_bowker, ContingencyTable, TestResult};
pub use compare::{compare_traces, Comparison};
pub use metrics::{macro_average, score, weighted_average, ClassScore, PerClassScores};
pub use report::{render_comparison, render_scores_table, ScoreRow};
