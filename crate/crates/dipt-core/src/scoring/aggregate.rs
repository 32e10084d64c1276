//! Cross-run score aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One run's accuracy and the fraction of items whose output failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub score: f64,
    pub parse_failure_rate: f64,
}

/// Mean and standard deviation over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
    pub parse_failure_rate: f64,
}

/// Aggregate per-run scores. Uses the population standard deviation unless
/// `sample_std` is set; a single run always reports std 0.
pub fn aggregate_runs(runs: &[RunScore], sample_std: bool) -> Result<ScoreSummary> {
    if runs.is_empty() {
        return Err(Error::Input("no runs to aggregate".into()));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.score).sum::<f64>() / n;
    let sum_sq: f64 = runs.iter().map(|r| (r.score - mean).powi(2)).sum();
    let std = if runs.len() == 1 {
        0.0
    } else {
        let divisor = if sample_std { n - 1.0 } else { n };
        (sum_sq / divisor).sqrt()
    };
    let parse_failure_rate = runs.iter().map(|r| r.parse_failure_rate).sum::<f64>() / n;
    Ok(ScoreSummary { mean, std, n_runs: runs.len(), parse_failure_rate })
}
