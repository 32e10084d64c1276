//! Task templates and placeholder rendering.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskInstance;
use crate::error::{Error, Result};
use crate::prompt::PromptText;

/// How an option block is laid out in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionStyle {
    /// `1: text` lines in option order.
    Numbered,
    /// `label: text` lines using the instance's labels.
    LabelList,
    /// No option block; any options live in the template prose.
    None,
}

impl OptionStyle {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "numbered" => Ok(Self::Numbered),
            "label-list" => Ok(Self::LabelList),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown option_style: {other}"))),
        }
    }
}

/// Which instance field a paraphrase structure marker maps back to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceField {
    Context,
    Question,
}

/// A paraphrase request template plus the structure markers used to parse
/// the generated paraphrase back into an instance.
#[derive(Debug, Clone)]
pub struct ParaphraseTemplate {
    pub header: String,
    /// Ordered (marker, field) pairs, e.g. `("Context", Context)`.
    pub fields: Vec<(String, InstanceField)>,
}

/// A task prompt template for one dataset.
#[derive(Debug, Clone)]
pub struct TaskTemplate {
    pub dataset_id: String,
    pub header: String,
    pub option_style: OptionStyle,
    /// Sentiment-flagged datasets swap "option" for the sentiment word in
    /// the perspective instruction.
    pub sentiment: bool,
    pub paraphrase: Option<ParaphraseTemplate>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([^{}\n]+)\}").unwrap())
}

fn context_of<'a>(instance: &'a TaskInstance, name: &str) -> Result<&'a str> {
    match instance.context.as_deref() {
        Some(text) if !text.is_empty() => Ok(text),
        _ => Err(Error::MissingPlaceholder(name.to_string())),
    }
}

fn question_of<'a>(instance: &'a TaskInstance, name: &str) -> Result<&'a str> {
    if instance.question.is_empty() {
        Err(Error::MissingPlaceholder(name.to_string()))
    } else {
        Ok(&instance.question)
    }
}

/// Resolve one placeholder against an instance. The alias table covers the
/// placeholder names used by the bundled templates; custom templates should
/// stick to `context`, `question`, `options`, and `option N`.
fn resolve(name: &str, instance: &TaskInstance, style: OptionStyle) -> Result<String> {
    match name {
        "context" | "news article" | "review" | "scenario" | "premise" | "subject"
        | "passage" | "story" => context_of(instance, name).map(str::to_string),
        "question" | "hypothesis" | "description" => {
            question_of(instance, name).map(str::to_string)
        }
        "options" => match style {
            OptionStyle::None => Err(Error::Config(
                "template uses {options} but option_style is none".into(),
            )),
            OptionStyle::Numbered => Ok(instance
                .options
                .iter()
                .enumerate()
                .map(|(i, o)| format!("{}: {}", i + 1, o.text))
                .collect::<Vec<_>>()
                .join("\n")),
            OptionStyle::LabelList => Ok(instance
                .options
                .iter()
                .map(|o| format!("{}: {}", o.label, o.text))
                .collect::<Vec<_>>()
                .join("\n")),
        },
        _ => {
            if let Some(n) = name.strip_prefix("option ") {
                let idx: usize = n
                    .parse()
                    .map_err(|_| Error::MissingPlaceholder(name.to_string()))?;
                return instance
                    .options
                    .get(idx.wrapping_sub(1))
                    .map(|o| o.text.clone())
                    .ok_or_else(|| Error::MissingPlaceholder(name.to_string()));
            }
            Err(Error::MissingPlaceholder(name.to_string()))
        }
    }
}

/// Fill a template body. Pure: identical inputs give identical bytes.
fn fill(header: &str, instance: &TaskInstance, style: OptionStyle) -> Result<String> {
    let re = placeholder_re();
    let mut out = String::with_capacity(header.len());
    let mut last = 0;
    let mut max_slot = 0usize;
    for caps in re.captures_iter(header) {
        let whole = caps.get(0).unwrap();
        let name = caps.get(1).unwrap().as_str();
        out.push_str(&header[last..whole.start()]);
        out.push_str(&resolve(name, instance, style)?);
        if let Some(n) = name.strip_prefix("option ") {
            if let Ok(idx) = n.parse::<usize>() {
                max_slot = max_slot.max(idx);
            }
        }
        last = whole.end();
    }
    out.push_str(&header[last..]);
    // Explicit option slots must cover the whole option list; silently
    // dropping an option would corrupt the evaluation.
    if max_slot > 0 && max_slot != instance.options.len() {
        return Err(Error::Config(format!(
            "template has {max_slot} option slots but instance {} has {} options",
            instance.id,
            instance.options.len()
        )));
    }
    Ok(out)
}

/// Render a task prompt for an instance.
pub fn render_task_prompt(instance: &TaskInstance, template: &TaskTemplate) -> Result<PromptText> {
    if instance.dataset != template.dataset_id {
        return Err(Error::Config(format!(
            "dataset mismatch: instance is `{}`, template is `{}`",
            instance.dataset, template.dataset_id
        )));
    }
    let body = fill(&template.header, instance, template.option_style)?;
    Ok(PromptText::new(body, format!("task:{}", template.dataset_id)))
}

/// Render the paraphrase request for an instance.
pub fn render_paraphrase_prompt(
    instance: &TaskInstance,
    template: &TaskTemplate,
) -> Result<PromptText> {
    let para = template
        .paraphrase
        .as_ref()
        .ok_or_else(|| Error::UnsupportedDataset(instance.dataset.clone()))?;
    let body = fill(&para.header, instance, OptionStyle::None)?;
    Ok(PromptText::new(
        body,
        format!("paraphrase:{}", template.dataset_id),
    ))
}

/// Split a generated paraphrase back into instance fields using the
/// dataset's structure markers. Returns None when a marker was lost, in
/// which case the caller excludes the paraphrase and counts it.
pub fn parse_paraphrase_response(
    text: &str,
    template: &TaskTemplate,
) -> Option<(Option<String>, Option<String>)> {
    let para = template.paraphrase.as_ref()?;
    let mut spans: Vec<(usize, usize, InstanceField)> = Vec::new();
    for (marker, field) in &para.fields {
        let tag = format!("{marker}:");
        let at = text.find(&tag)?;
        spans.push((at, at + tag.len(), *field));
    }
    // Content of each field runs from the end of its marker to the start of
    // the next marker (by position), or the end of the text.
    let mut starts: Vec<usize> = spans.iter().map(|s| s.0).collect();
    starts.sort_unstable();
    let mut context = None;
    let mut question = None;
    for (at, content_from, field) in spans {
        let until = starts
            .iter()
            .copied()
            .filter(|&s| s > at)
            .min()
            .unwrap_or(text.len());
        let value = text[content_from..until].trim().to_string();
        if value.is_empty() {
            return None;
        }
        match field {
            InstanceField::Context => context = Some(value),
            InstanceField::Question => question = Some(value),
        }
    }
    Some((context, question))
}
