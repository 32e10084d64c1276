//! Error types shared across the harness.

use thiserror::Error;

/// Unified error type for every harness operation.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown keys, invalid values, mismatched wiring.
    #[error("configuration error: {0}")]
    Config(String),

    /// A template placeholder could not be filled from the given instance.
    #[error("missing placeholder: {0}")]
    MissingPlaceholder(String),

    /// Invalid runtime input (empty prompt, empty list, ...).
    #[error("input error: {0}")]
    Input(String),

    /// No template (task or paraphrase) is registered for the dataset.
    #[error("unsupported dataset: {0}")]
    UnsupportedDataset(String),

    /// A dataset row violated the instance schema.
    #[error("schema violation at row {row}: {message}")]
    Schema { row: usize, message: String },

    /// Sampling request could not be satisfied.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Replay lookup failed for a fingerprint.
    #[error("cassette miss: no recorded completion for fingerprint {0}")]
    CassetteMiss(String),

    /// Cassette file could not be parsed.
    #[error("cassette load error at line {line}: {message}")]
    CassetteLoad { line: usize, message: String },

    /// Exhausted retries or other transport-level failure.
    #[error("transport error: {0}")]
    Transport(String),

    /// Non-retryable HTTP error from the completion endpoint.
    #[error("request error (HTTP {status}): {message}")]
    Request { status: u16, message: String },

    /// Judge reply carried no score in 1..=5.
    #[error("judge parse error: {0}")]
    JudgeParse(String),

    /// Not enough gold-consistent samples to export.
    #[error("export shortfall: requested {requested}, only {available} gold-consistent samples available")]
    ExportShortfall { requested: usize, available: usize },

    /// A rater vote file is missing a flagged item.
    #[error("incomplete rating: rater {rater} has no vote for item {item}")]
    IncompleteRating { rater: String, item: String },

    /// Agreement computation had nothing to pair.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Input(e.to_string())
    }
}

impl Error {
    /// Errors that should map to the CLI's configuration exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnsupportedDataset(_) | Error::MissingPlaceholder(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
