//! Prediction extraction from completion text.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Metric, TaskInstance, TaskKind};

use super::metrics::{normalize_answer, parse_rational};

/// How the prediction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionConfidence {
    /// The machine footer line `Final answer: <X>` was present and parsed.
    Marker,
    /// Recovered by pattern heuristics.
    Heuristic,
    /// Nothing extractable; scores zero and counts toward the failure tally.
    Failed,
}

/// Parsed model answer: ranked option labels for multichoice, normalized
/// text for freeform. Failed predictions carry neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranked_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
    pub confidence: ExtractionConfidence,
}

impl Prediction {
    pub fn multichoice(ranked_labels: Vec<String>, confidence: ExtractionConfidence) -> Self {
        Self { ranked_labels, answer_text: None, confidence }
    }

    pub fn freeform(answer_text: String, confidence: ExtractionConfidence) -> Self {
        Self { ranked_labels: Vec::new(), answer_text: Some(answer_text), confidence }
    }

    pub fn failed() -> Self {
        Self {
            ranked_labels: Vec::new(),
            answer_text: None,
            confidence: ExtractionConfidence::Failed,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.confidence == ExtractionConfidence::Failed
    }

    /// Canonical identity used by self-consistency voting; None for failures.
    pub fn vote_key(&self) -> Option<String> {
        if self.is_failed() {
            return None;
        }
        Some(match &self.answer_text {
            Some(text) => normalize_answer(text),
            None => self.ranked_labels.join("|"),
        })
    }
}

const MARKER: &str = "final answer:";

/// Phrases that introduce a conclusion; a label mentioned shortly after one
/// of these is taken as the model's pick.
const AFFIRMATIONS: &[&str] = &[
    "final answer",
    "correct answer",
    "correct option",
    "correct choice",
    "correct categor",
    "best answer",
    "best option",
    "best choice",
    "most fitting",
    "most appropriate",
    "most likely answer",
    "the answer is",
    "the answers are",
    "answer is",
    "answers are",
    "i choose",
    "i would choose",
    "i select",
    "i would select",
    "i pick",
    "my choice",
    "my answer",
    "i would go with",
];

/// Window after an affirmation phrase in which label mentions are accepted.
const AFFIRMATION_WINDOW: usize = 240;

/// Extract a prediction from raw completion text.
///
/// The last `Final answer:` line wins when present. Otherwise, in order:
/// the last option label mentioned right after an affirmation phrase, the
/// last standalone option label, and for freeform items the last number or
/// the final quoted span. Anything else yields a failed prediction.
pub fn extract_answer(completion_text: &str, instance: &TaskInstance) -> Prediction {
    match instance.task_kind {
        TaskKind::Multichoice => extract_multichoice(completion_text, instance),
        TaskKind::Freeform => extract_freeform(completion_text),
    }
}

fn wanted_labels(instance: &TaskInstance) -> usize {
    match instance.metric {
        Metric::Top2 => 2,
        _ => 1,
    }
}

fn extract_multichoice(text: &str, instance: &TaskInstance) -> Prediction {
    let lower = text.to_ascii_lowercase();
    let k = wanted_labels(instance);
    let mentions = label_mentions(text, &lower, instance);

    let labels = |indices: Vec<usize>| -> Vec<String> {
        indices.into_iter().map(|i| instance.options[i].label.clone()).collect()
    };

    if let Some(marker_end) = find_last(&lower, MARKER) {
        let line_end = text[marker_end..].find('\n').map_or(text.len(), |i| marker_end + i);
        let picked = first_distinct(&mentions, marker_end, line_end, k);
        if !picked.is_empty() {
            return Prediction::multichoice(labels(picked), ExtractionConfidence::Marker);
        }
    }

    for aff_end in affirmation_ends(&lower).into_iter().rev() {
        let window_end = (aff_end + AFFIRMATION_WINDOW).min(text.len());
        let picked = first_distinct(&mentions, aff_end, window_end, k);
        if !picked.is_empty() {
            return Prediction::multichoice(labels(picked), ExtractionConfidence::Heuristic);
        }
    }

    let picked = last_distinct(&mentions, k);
    if !picked.is_empty() {
        return Prediction::multichoice(labels(picked), ExtractionConfidence::Heuristic);
    }
    Prediction::failed()
}

fn extract_freeform(text: &str) -> Prediction {
    let lower = text.to_ascii_lowercase();
    if let Some(marker_end) = find_last(&lower, MARKER) {
        let line_end = text[marker_end..].find('\n').map_or(text.len(), |i| marker_end + i);
        let payload = text[marker_end..line_end].trim().trim_matches(|c| c == '*' || c == '_');
        if !payload.trim().is_empty() {
            return Prediction::freeform(normalize_answer(payload), ExtractionConfidence::Marker);
        }
    }
    if let Some(number) = last_number(text) {
        return Prediction::freeform(normalize_answer(&number), ExtractionConfidence::Heuristic);
    }
    if let Some(span) = last_quoted_span(text) {
        return Prediction::freeform(normalize_answer(&span), ExtractionConfidence::Heuristic);
    }
    Prediction::failed()
}

fn find_last(lower: &str, needle: &str) -> Option<usize> {
    lower.rfind(needle).map(|i| i + needle.len())
}

fn affirmation_ends(lower: &str) -> Vec<usize> {
    let mut ends: Vec<usize> = AFFIRMATIONS
        .iter()
        .flat_map(|pat| {
            lower.match_indices(pat).map(|(i, m)| i + m.len()).collect::<Vec<_>>()
        })
        .collect();
    ends.sort_unstable();
    ends.dedup();
    ends
}

#[derive(Debug, Clone, Copy)]
struct Mention {
    start: usize,
    end: usize,
    option_index: usize,
}

/// All places where an option is referenced, by label token or by option
/// text. Overlapping hits keep the longest match, so the label `positive`
/// never fires inside a `very positive` mention.
fn label_mentions(text: &str, lower: &str, instance: &TaskInstance) -> Vec<Mention> {
    let mut hits: Vec<Mention> = Vec::new();
    for (idx, option) in instance.options.iter().enumerate() {
        collect_term(text, lower, &option.label, idx, &mut hits);
        if option.text != option.label {
            collect_term(text, lower, &option.text, idx, &mut hits);
        }
    }
    hits.sort_by(|a, b| a.start.cmp(&b.start).then((b.end - b.start).cmp(&(a.end - a.start))));
    let mut kept: Vec<Mention> = Vec::new();
    for hit in hits {
        if kept.last().is_none_or(|prev| hit.start >= prev.end) {
            kept.push(hit);
        }
    }
    kept
}

fn collect_term(text: &str, lower: &str, term: &str, option_index: usize, out: &mut Vec<Mention>) {
    if is_numeric_term(term) {
        let target = normalize_answer(term);
        for m in number_token_regex().find_iter(text) {
            if normalize_answer(m.as_str()) == target {
                out.push(Mention { start: m.start(), end: m.end(), option_index });
            }
        }
    } else if term.len() >= 2 {
        let needle = term.to_ascii_lowercase();
        for (start, _) in lower.match_indices(&needle) {
            let end = start + needle.len();
            if word_bounded(lower, start, end) {
                out.push(Mention { start, end, option_index });
            }
        }
    }
}

fn is_numeric_term(term: &str) -> bool {
    parse_rational(term).is_some()
}

fn word_bounded(lower: &str, start: usize, end: usize) -> bool {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let before_ok = lower[..start].chars().next_back().is_none_or(|c| !is_word(c));
    let after_ok = lower[end..].chars().next().is_none_or(|c| !is_word(c));
    before_ok && after_ok
}

fn number_token_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").expect("static regex"))
}

fn first_distinct(mentions: &[Mention], from: usize, to: usize, k: usize) -> Vec<usize> {
    distinct(mentions.iter().filter(|m| m.start >= from && m.start < to), k, false)
}

fn last_distinct(mentions: &[Mention], k: usize) -> Vec<usize> {
    distinct(mentions.iter(), k, true)
}

fn distinct<'a>(
    mentions: impl Iterator<Item = &'a Mention>,
    k: usize,
    keep_last: bool,
) -> Vec<usize> {
    let mut ordered: Vec<usize> = Vec::new();
    for m in mentions {
        if let Some(pos) = ordered.iter().position(|&i| i == m.option_index) {
            if keep_last {
                ordered.remove(pos);
                ordered.push(m.option_index);
            }
        } else {
            ordered.push(m.option_index);
        }
    }
    if keep_last {
        let skip = ordered.len().saturating_sub(k);
        ordered.into_iter().skip(skip).collect()
    } else {
        ordered.into_iter().take(k).collect()
    }
}

fn last_number(text: &str) -> Option<String> {
    number_token_regex().find_iter(text).last().map(|m| m.as_str().to_string())
}

fn last_quoted_span(text: &str) -> Option<String> {
    let re = quoted_span_regex();
    re.captures_iter(text)
        .last()
        .and_then(|c| c.get(1).or_else(|| c.get(2)))
        .map(|m| m.as_str().to_string())
}

fn quoted_span_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new("\"([^\"\n]+)\"|“([^”\n]+)”").expect("static regex"))
}
