//! Rationale generation for instruction datasets and fine-tune export.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Metric, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Completion, Gateway};
use crate::prompt::{compose, MethodSpec, TemplateStore};
use crate::runner::ExperimentConfig;
use crate::scoring::{extract_answer, score_prediction};
use crate::seed::derive_seed;

/// Which response the fine-tune target carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Cot,
    DiptCot,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Plain => "plain",
            Self::Cot => "cot",
            Self::DiptCot => "dipt_cot",
        }
    }

    /// The prompt method generating this variant's rationale; None for
    /// plain, which copies the original response without a model call.
    pub fn method_spec(self) -> Option<MethodSpec> {
        let raw = match self {
            Self::Plain => return None,
            Self::Cot => "cot",
            Self::DiptCot => "dipt+cot",
        };
        Some(MethodSpec::parse(raw).expect("builtin method notation"))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "cot" => Ok(Self::Cot),
            "dipt_cot" => Ok(Self::DiptCot),
            other => Err(Error::Config(format!(
                "unknown variant `{other}`; expected plain, cot, or dipt_cot"
            ))),
        }
    }
}

/// One instruction-dataset record: a task, its shipped response, and the
/// canonical final answer used for consistency checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub instruction: String,
    pub response: String,
    pub gold: String,
}

/// Load a line-delimited instruction dataset. Blank lines and `#` comments
/// are skipped.
pub fn load_instruction_dataset(path: &Path) -> Result<Vec<InstructionSample>> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sample: InstructionSample = serde_json::from_str(line)
            .map_err(|e| Error::Schema { row: idx + 1, message: e.to_string() })?;
        for (field, value) in [
            ("instruction", &sample.instruction),
            ("response", &sample.response),
            ("gold", &sample.gold),
        ] {
            if value.trim().is_empty() {
                return Err(Error::Schema {
                    row: idx + 1,
                    message: format!("sample {}: empty {field}", sample.id),
                });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::Input(format!("no instruction samples in {}", path.display())));
    }
    Ok(samples)
}

/// One sample after rationale generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedSample {
    pub id: String,
    pub instruction: String,
    pub original_response: String,
    /// Generated rationale; empty for the plain variant.
    pub rationale_response: String,
    pub gold_consistent: bool,
    pub variant: Variant,
}

impl EnrichedSample {
    /// The assistant text the variant trains on.
    pub fn response_for_variant(&self) -> &str {
        match self.variant {
            Variant::Plain => &self.original_response,
            Variant::Cot | Variant::DiptCot => &self.rationale_response,
        }
    }
}

/// Drop a trailing answer-marker line. The footer forces the marker so
/// extraction is reliable; fine-tuning targets should read naturally. A
/// completion that is nothing but the marker line is kept whole.
fn strip_marker_line(text: &str) -> String {
    let trimmed = text.trim_end();
    if let Some(at) = trimmed.rfind('\n') {
        let last = trimmed[at + 1..].trim_start_matches(['*', '_', ' ']);
        if last.to_ascii_lowercase().starts_with("final answer:") {
            return trimmed[..at].trim_end().to_string();
        }
    }
    trimmed.to_string()
}

fn instance_for(config: &ExperimentConfig, sample: &InstructionSample) -> TaskInstance {
    TaskInstance {
        id: sample.id.clone(),
        dataset: config.dataset_id.clone(),
        context: None,
        question: sample.instruction.clone(),
        options: Vec::new(),
        gold: vec![sample.gold.clone()],
        task_kind: TaskKind::Freeform,
        metric: Metric::Exact,
    }
}

/// Generate rationales for a whole dataset. Inconsistent samples are
/// resampled with fresh decoding seeds up to `max_retries` times; samples
/// still inconsistent after that are returned with `gold_consistent` false.
pub fn enrich_dataset(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    samples: &[InstructionSample],
    variant: Variant,
    max_retries: usize,
) -> Result<Vec<EnrichedSample>> {
    if samples.is_empty() {
        return Err(Error::Input("no instruction samples to enrich".into()));
    }
    let enriched = |sample: &InstructionSample, rationale: String, consistent: bool| {
        EnrichedSample {
            id: sample.id.clone(),
            instruction: sample.instruction.clone(),
            original_response: sample.response.clone(),
            rationale_response: rationale,
            gold_consistent: consistent,
            variant,
        }
    };

    let Some(spec) = variant.method_spec() else {
        return Ok(samples.iter().map(|s| enriched(s, String::new(), true)).collect());
    };

    let mut out: Vec<Option<EnrichedSample>> = vec![None; samples.len()];
    let mut pending: Vec<usize> = (0..samples.len()).collect();
    for attempt in 0..=max_retries {
        let mut requests = Vec::with_capacity(pending.len());
        for &i in &pending {
            let instance = instance_for(config, &samples[i]);
            let prompt = compose(&instance, store, &spec, config.demos.as_deref(), &config.assets)?;
            let label = format!("enrich/{variant}/{}/t{attempt}", samples[i].id);
            let request =
                ChatRequest::new(&config.model_id, vec![ChatMessage::user(&prompt.body)])?
                    .with_decoding(
                        config.decoding.clone().with_seed(derive_seed(config.root_seed, &label)),
                    )
                    .with_tag(label);
            requests.push(request);
        }
        let completions: Vec<Completion> = gateway
            .complete_batch(&requests, config.parallelism)
            .into_iter()
            .collect::<Result<_>>()?;

        for (&i, completion) in pending.iter().zip(&completions) {
            let instance = instance_for(config, &samples[i]);
            let prediction = extract_answer(&completion.text, &instance);
            let consistent = score_prediction(&prediction, &instance);
            if consistent || attempt == max_retries {
                out[i] =
                    Some(enriched(&samples[i], strip_marker_line(&completion.text), consistent));
            }
        }
        pending.retain(|&i| out[i].is_none());
        if pending.is_empty() {
            break;
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every sample resolved")).collect())
}

/// Generate one sample's rationale; see [`enrich_dataset`].
pub fn enrich_sample(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    sample: &InstructionSample,
    variant: Variant,
    max_retries: usize,
) -> Result<EnrichedSample> {
    let mut enriched =
        enrich_dataset(config, gateway, store, std::slice::from_ref(sample), variant, max_retries)?;
    Ok(enriched.pop().expect("one sample in, one out"))
}

/// Training hyperparameters recorded for reference; training is external.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHyperparameters {
    pub batch_size: u32,
    pub epochs: u32,
    pub learning_rate: f64,
    pub max_length: u32,
}

impl Default for ReferenceHyperparameters {
    fn default() -> Self {
        Self { batch_size: 32, epochs: 1, learning_rate: 5e-7, max_length: 2048 }
    }
}

/// Sidecar written next to every exported fine-tune file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMetadata {
    pub variant: Variant,
    pub n: usize,
    pub generator_model: String,
    pub reference_hyperparameters: ReferenceHyperparameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: String,
    pub content: String,
}

/// One line of the exported chat-format file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub id: String,
    pub variant: Variant,
    pub messages: Vec<ChatTurn>,
}

/// Sidecar path for an export: the data file's extension swapped for
/// `meta.json`.
pub fn metadata_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("meta.json")
}

/// Write exactly `n` gold-consistent records of one variant in chat format,
/// plus the metadata sidecar. Mixing variants in the input is an error, as
/// is a shortfall of consistent samples.
pub fn export_finetune_dataset(
    samples: &[EnrichedSample],
    variant: Variant,
    n: usize,
    path: &Path,
    generator_model: &str,
) -> Result<ExportMetadata> {
    if n == 0 {
        return Err(Error::Input("export size must be at least 1".into()));
    }
    if let Some(mixed) = samples.iter().find(|s| s.variant != variant) {
        return Err(Error::Input(format!(
            "export of variant {variant} but sample {} is variant {}; single-variant files only",
            mixed.id, mixed.variant
        )));
    }
    let consistent: Vec<&EnrichedSample> =
        samples.iter().filter(|s| s.gold_consistent).collect();
    if consistent.len() < n {
        return Err(Error::ExportShortfall { requested: n, available: consistent.len() });
    }

    let mut body = String::new();
    for sample in &consistent[..n] {
        let record = ExportRecord {
            id: sample.id.clone(),
            variant,
            messages: vec![
                ChatTurn { role: "user".into(), content: sample.instruction.clone() },
                ChatTurn {
                    role: "assistant".into(),
                    content: sample.response_for_variant().to_string(),
                },
            ],
        };
        body.push_str(&serde_json::to_string(&record).expect("record serializes"));
        body.push('\n');
    }
    std::fs::write(path, body)?;

    let metadata = ExportMetadata {
        variant,
        n,
        generator_model: generator_model.to_string(),
        reference_hyperparameters: ReferenceHyperparameters::default(),
    };
    let mut sidecar = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    sidecar.push('\n');
    std::fs::write(metadata_path(path), sidecar)?;
    Ok(metadata)
}

/// Read back an exported fine-tune file.
pub fn load_finetune_dataset(path: &Path) -> Result<Vec<ExportRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ExportRecord = serde_json::from_str(line)
            .map_err(|e| Error::Schema { row: idx + 1, message: e.to_string() })?;
        let roles: Vec<&str> = record.messages.iter().map(|m| m.role.as_str()).collect();
        if roles != ["user", "assistant"] {
            return Err(Error::Schema {
                row: idx + 1,
                message: format!("expected [user, assistant] turns, got {roles:?}"),
            });
        }
        records.push(record);
    }
    Ok(records)
}
