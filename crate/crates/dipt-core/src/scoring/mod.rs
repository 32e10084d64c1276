//! Prediction extraction and all metrics: Top-k accuracy, flexible exact
//! match, majority vote, refusal detection, run aggregation, and
//! Krippendorff's alpha.

mod aggregate;
mod agree;
mod extract;
mod metrics;
mod refusal;
mod vote;

pub use aggregate::{aggregate_runs, RunScore, ScoreSummary};
pub use agree::{krippendorff_alpha, RaterMatrix};
pub use extract::{extract_answer, ExtractionConfidence, Prediction};
pub use metrics::{
    exact_match_flexible, normalize_answer, parse_rational, score_prediction, top_k_accuracy,
};
pub use refusal::{builtin_keywords, load_keywords, parse_keyword_list, refusal_detect};
pub use vote::majority_vote;
