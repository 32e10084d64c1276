//! Two-stage mislabel detection: flag items a strong method disagrees with,
//! then let independent raters vote the flagged labels.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{load_dataset, sample_eval_set, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::prompt::{MethodSpec, TemplateStore};
use crate::report::{Render, Trace};
use crate::runner::{evaluate_method, Ctx, ExperimentConfig};
use crate::scoring::{exact_match_flexible, krippendorff_alpha, Prediction, RaterMatrix};

/// A vote source: either a model run with a method, or an imported human
/// vote file mapping item id to label.
#[derive(Debug, Clone, PartialEq)]
pub enum RaterSpec {
    Model { name: String, method: MethodSpec },
    File { name: String, path: PathBuf },
}

impl RaterSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Model { name, .. } | Self::File { name, .. } => name,
        }
    }

    /// Parse a `mislabel.rater.<name>` value: `model:<method>` or
    /// `file:<votes path>`.
    pub fn parse(name: &str, value: &str) -> Result<Self> {
        if let Some(raw) = value.strip_prefix("model:") {
            let method = MethodSpec::parse(raw.trim())?;
            method.validate()?;
            return Ok(Self::Model { name: name.to_string(), method });
        }
        if let Some(path) = value.strip_prefix("file:") {
            let path = path.trim();
            if path.is_empty() {
                return Err(Error::Config(format!("rater {name}: empty vote file path")));
            }
            return Ok(Self::File { name: name.to_string(), path: PathBuf::from(path) });
        }
        Err(Error::Config(format!(
            "rater {name}: expected `model:<method>` or `file:<path>`, got `{value}`"
        )))
    }
}

/// Collect `mislabel.rater.*` keys into specs, ordered by rater name.
pub fn rater_specs_from_config(cfg: &Config) -> Result<Vec<RaterSpec>> {
    let mut names: Vec<&str> =
        cfg.keys().filter_map(|k| k.strip_prefix("mislabel.rater.")).collect();
    names.sort_unstable();
    let mut specs = Vec::with_capacity(names.len());
    for name in names {
        let value = cfg.get(&format!("mislabel.rater.{name}")).expect("key came from cfg");
        specs.push(RaterSpec::parse(name, value)?);
    }
    if specs.len() < 2 {
        return Err(Error::Config(format!(
            "mislabel detection needs at least 2 raters, got {}",
            specs.len()
        )));
    }
    Ok(specs)
}

/// Parse a vote file: one `item_id<whitespace>label` per line, `#` comments
/// and blank lines skipped. Labels may contain spaces.
pub fn parse_vote_file(text: &str) -> Result<HashMap<String, String>> {
    let mut votes = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((id, label)) = line.split_once(char::is_whitespace) else {
            return Err(Error::Schema {
                row: idx + 1,
                message: format!("expected `item_id label`, got `{line}`"),
            });
        };
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Schema { row: idx + 1, message: format!("{id}: empty label") });
        }
        votes.insert(id.to_string(), label.to_string());
    }
    Ok(votes)
}

/// Map a vote onto the item's canonical option label when one matches
/// case-insensitively; other votes stay as written.
fn canonicalize_vote(vote: &str, item: &TaskInstance) -> String {
    item.options
        .iter()
        .find(|o| o.label.eq_ignore_ascii_case(vote))
        .map(|o| o.label.clone())
        .unwrap_or_else(|| vote.to_string())
}

fn vote_agrees_with_gold(vote: &str, item: &TaskInstance) -> bool {
    match item.task_kind {
        TaskKind::Multichoice => item.gold.iter().any(|g| g == vote),
        TaskKind::Freeform => exact_match_flexible(vote, &item.gold),
    }
}

fn vote_of(prediction: &Prediction, item: &TaskInstance) -> Option<String> {
    match item.task_kind {
        TaskKind::Multichoice => prediction.ranked_labels.first().cloned(),
        TaskKind::Freeform => prediction.answer_text.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MislabelCategory {
    Wrong,
    Ambiguous,
    FalsePositive,
}

/// Categorize one flagged item from its votes: Wrong when every rater
/// disagrees with the gold, FalsePositive when every rater agrees, and
/// Ambiguous otherwise.
pub fn categorize_item(item: &TaskInstance, votes: &[String]) -> MislabelCategory {
    debug_assert!(!votes.is_empty());
    let agreements = votes.iter().filter(|v| vote_agrees_with_gold(v, item)).count();
    if agreements == 0 {
        MislabelCategory::Wrong
    } else if agreements == votes.len() {
        MislabelCategory::FalsePositive
    } else {
        MislabelCategory::Ambiguous
    }
}

/// One flagged item with its votes, in rater order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MislabelItem {
    pub item_id: String,
    pub gold: Vec<String>,
    /// What the flagging method predicted instead of the gold.
    pub flag_prediction: Prediction,
    pub votes: Vec<String>,
    pub category: MislabelCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MislabelReport {
    pub dataset: String,
    pub model: String,
    pub flagging_method: String,
    pub n_examples: usize,
    pub flagged: usize,
    pub raters: Vec<String>,
    pub wrong: usize,
    pub ambiguous: usize,
    pub false_positive: usize,
    /// Agreement over the rater-by-item vote matrix; absent when nothing
    /// was flagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_all: Option<f64>,
    pub items: Vec<MislabelItem>,
}

impl Render for MislabelReport {
    fn markdown(&self) -> String {
        let mut out = format!(
            "# Mislabel report: {}\n\nmodel: {} | flagging method: {} | examples: {} | flagged: {} | raters: {}\n\n",
            self.dataset,
            self.model,
            self.flagging_method,
            self.n_examples,
            self.flagged,
            self.raters.join(", ")
        );
        out.push_str("| Category | Count |\n|---|---|\n");
        for (name, count) in
            [("Wrong", self.wrong), ("Ambiguous", self.ambiguous), ("FalsePositive", self.false_positive)]
        {
            out.push_str(&format!("| {name} | {count} |\n"));
        }
        match self.alpha_all {
            Some(alpha) => {
                out.push_str(&format!("\nKrippendorff's alpha (all raters): {alpha:.2}\n"));
            }
            None => out.push_str("\nKrippendorff's alpha (all raters): n/a\n"),
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("category,count\n");
        out.push_str(&format!("Wrong,{}\n", self.wrong));
        out.push_str(&format!("Ambiguous,{}\n", self.ambiguous));
        out.push_str(&format!("FalsePositive,{}\n", self.false_positive));
        if let Some(alpha) = self.alpha_all {
            out.push_str(&format!("alpha_all,{alpha}\n"));
        }
        out
    }
}

fn model_votes(
    ctx: &Ctx,
    name: &str,
    method: &MethodSpec,
    flagged: &[TaskInstance],
) -> Result<Vec<String>> {
    let scope = format!("mislabel/rate/{name}");
    let run = evaluate_method(ctx, flagged, method, 0, &scope)?;
    flagged
        .iter()
        .zip(&run.traces)
        .map(|(item, trace)| {
            vote_of(&trace.prediction, item)
                .map(|v| canonicalize_vote(&v, item))
                .ok_or_else(|| Error::IncompleteRating {
                    rater: name.to_string(),
                    item: item.id.clone(),
                })
        })
        .collect()
}

fn file_votes(name: &str, path: &Path, flagged: &[TaskInstance]) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read vote file {}: {e}", path.display())))?;
    let votes = parse_vote_file(&text)?;
    flagged
        .iter()
        .map(|item| {
            votes
                .get(&item.id)
                .map(|v| canonicalize_vote(v, item))
                .ok_or_else(|| Error::IncompleteRating {
                    rater: name.to_string(),
                    item: item.id.clone(),
                })
        })
        .collect()
}

/// Run the two-stage workflow: flag items the method scores against the
/// gold, collect one vote per rater per flagged item, partition into
/// Wrong / Ambiguous / FalsePositive, and compute overall agreement.
pub fn detect_mislabels(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    flagging: &MethodSpec,
    raters: &[RaterSpec],
) -> Result<MislabelReport> {
    if raters.len() < 2 {
        return Err(Error::Config(format!(
            "mislabel detection needs at least 2 raters, got {}",
            raters.len()
        )));
    }
    let corpus = load_dataset(&config.data_path, &config.adapter)?;
    let set = sample_eval_set(&corpus, config.n_examples, config.sample_seed(0))?;
    let items = &set.instances;

    let ctx = Ctx { config, gateway, store };
    let flag_run = evaluate_method(&ctx, items, flagging, 0, "mislabel/flag")?;
    let flagged: Vec<TaskInstance> = items
        .iter()
        .zip(&flag_run.traces)
        .filter(|(_, trace)| !trace.correct)
        .map(|(item, _)| item.clone())
        .collect();
    let flag_traces: Vec<&Trace> =
        flag_run.traces.iter().filter(|trace| !trace.correct).collect();

    let mut votes_by_rater: Vec<Vec<String>> = Vec::with_capacity(raters.len());
    if !flagged.is_empty() {
        for rater in raters {
            let votes = match rater {
                RaterSpec::Model { name, method } => model_votes(&ctx, name, method, &flagged)?,
                RaterSpec::File { name, path } => file_votes(name, path, &flagged)?,
            };
            votes_by_rater.push(votes);
        }
    }

    let alpha_all = if flagged.is_empty() {
        None
    } else {
        let rows = (0..flagged.len())
            .map(|idx| votes_by_rater.iter().map(|votes| Some(votes[idx].clone())).collect())
            .collect();
        Some(krippendorff_alpha(&RaterMatrix::new(rows)?)?)
    };

    let mut report_items = Vec::with_capacity(flagged.len());
    let (mut wrong, mut ambiguous, mut false_positive) = (0, 0, 0);
    for (idx, item) in flagged.iter().enumerate() {
        let votes: Vec<String> =
            votes_by_rater.iter().map(|rater_votes| rater_votes[idx].clone()).collect();
        let category = categorize_item(item, &votes);
        match category {
            MislabelCategory::Wrong => wrong += 1,
            MislabelCategory::Ambiguous => ambiguous += 1,
            MislabelCategory::FalsePositive => false_positive += 1,
        }
        report_items.push(MislabelItem {
            item_id: item.id.clone(),
            gold: item.gold.clone(),
            flag_prediction: flag_traces[idx].prediction.clone(),
            votes,
            category,
        });
    }

    Ok(MislabelReport {
        dataset: config.dataset_id.clone(),
        model: config.model_id.clone(),
        flagging_method: flagging.to_string(),
        n_examples: items.len(),
        flagged: flagged.len(),
        raters: raters.iter().map(|r| r.name().to_string()).collect(),
        wrong,
        ambiguous,
        false_positive,
        alpha_all,
        items: report_items,
    })
}
