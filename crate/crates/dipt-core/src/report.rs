//! Report types and deterministic rendering to markdown, CSV, and JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Prediction, ScoreSummary};

/// Output format for report files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!(
                "unknown report format `{other}` (expected markdown, csv, or json)"
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Markdown => "md",
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Anything renderable to the three report formats. JSON comes from serde,
/// so a JSON render parsed back and re-rendered is byte-identical.
pub trait Render: Serialize {
    fn markdown(&self) -> String;
    fn csv(&self) -> String;

    fn json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.markdown(),
            ReportFormat::Csv => self.csv(),
            ReportFormat::Json => self.json(),
        }
    }
}

/// Render and write a report file.
pub fn write_report<R: Render>(report: &R, format: ReportFormat, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, report.render(format))?;
    Ok(())
}

pub(crate) fn pct(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

fn delta_cell(delta: f64) -> String {
    if delta > 0.0 {
        format!("↑ +{:.2}", delta * 100.0)
    } else if delta < 0.0 {
        format!("↓ {:.2}", delta * 100.0)
    } else {
        "0.00".to_string()
    }
}

/// One method's aggregate scores within an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub summary: ScoreSummary,
    /// Mean minus the baseline (first) method's mean; 0 for the baseline.
    pub delta: f64,
}

/// Per-example evidence for one run of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub item_id: String,
    pub run: usize,
    pub method: String,
    /// Request fingerprints behind this prediction (several when
    /// self-consistency sampling is on).
    pub fingerprints: Vec<String>,
    pub prediction: Prediction,
    pub correct: bool,
}

/// Accuracy experiment results: per-method summaries plus traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub model: String,
    pub n_examples: usize,
    pub n_runs: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<Trace>,
}

impl Render for ExperimentReport {
    fn markdown(&self) -> String {
        let mut out = format!(
            "# Accuracy report: {}\n\nmodel: {} | examples: {} | runs: {}\n\n",
            self.dataset, self.model, self.n_examples, self.n_runs
        );
        out.push_str("| Method | Accuracy | Std | Δ | Parse failures |\n");
        out.push_str("| --- | --- | --- | --- | --- |\n");
        for m in &self.methods {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                m.method,
                pct(m.summary.mean),
                pct(m.summary.std),
                delta_cell(m.delta),
                pct(m.summary.parse_failure_rate),
            ));
        }
        if !self.traces.is_empty() {
            out.push_str(&format!("\ntraces recorded: {}\n", self.traces.len()));
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("method,mean,std,n_runs,parse_failure_rate,delta\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.method,
                m.summary.mean,
                m.summary.std,
                m.summary.n_runs,
                m.summary.parse_failure_rate,
                m.delta,
            ));
        }
        out
    }
}

/// One method's paraphrase-stability outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub method: String,
    pub original_mean: f64,
    pub paraphrased_mean: f64,
    /// original_mean - paraphrased_mean.
    pub drop: f64,
}

/// Paraphrase stability results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dataset: String,
    pub model: String,
    pub n_examples: usize,
    pub n_paraphrases: usize,
    /// Paraphrases whose structure markers were lost, excluded from scoring.
    pub excluded_paraphrases: usize,
    pub rows: Vec<StabilityRow>,
}

impl Render for StabilityReport {
    fn markdown(&self) -> String {
        let mut out = format!(
            "# Stability report: {}\n\nmodel: {} | examples: {} | paraphrase iterations: {} | excluded paraphrases: {}\n\n",
            self.dataset, self.model, self.n_examples, self.n_paraphrases, self.excluded_paraphrases
        );
        out.push_str("| Method | Original → Paraphrased |\n| --- | --- |\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} → {} ({:+.2}) |\n",
                row.method,
                pct(row.original_mean),
                pct(row.paraphrased_mean),
                (row.paraphrased_mean - row.original_mean) * 100.0,
            ));
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("method,original_mean,paraphrased_mean,drop\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.method, row.original_mean, row.paraphrased_mean, row.drop
            ));
        }
        out
    }
}

/// Latency at one perspective count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub perspectives: usize,
    pub mean_seconds: f64,
    pub n_samples: usize,
    /// mean(K) / (K * mean(1)); 1.0 at K = 1 by definition.
    pub ratio_to_linear: f64,
}

/// Runtime-versus-perspectives results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub dataset: String,
    pub model: String,
    /// True when latencies were replayed from a cassette rather than
    /// measured live.
    pub replayed_latencies: bool,
    pub rows: Vec<RuntimeRow>,
}

impl Render for RuntimeReport {
    fn markdown(&self) -> String {
        let mut out = format!("# Runtime report: {}\n\nmodel: {}", self.dataset, self.model);
        if self.replayed_latencies {
            out.push_str(" | latencies replayed from cassette");
        }
        out.push_str("\n\n| Perspectives (K) | Mean seconds | Samples | Ratio to linear |\n");
        out.push_str("| --- | --- | --- | --- |\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {:.3} | {} | {:.3} |\n",
                row.perspectives, row.mean_seconds, row.n_samples, row.ratio_to_linear
            ));
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("perspectives,mean_seconds,n_samples,ratio_to_linear\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.perspectives, row.mean_seconds, row.n_samples, row.ratio_to_linear
            ));
        }
        out
    }
}
