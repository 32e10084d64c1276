//! Normalized evaluation items.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether an item is answered by picking options or by free text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Multichoice,
    Freeform,
}

/// Scoring rule for an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Top1,
    Top2,
    Exact,
}

/// One labeled option: (label, display text).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Option_ {
    pub label: String,
    pub text: String,
}

/// One normalized evaluation item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<Option_>,
    /// Acceptable answers: option labels for multichoice, normalized strings
    /// for freeform. Non-empty.
    pub gold: Vec<String>,
    pub task_kind: TaskKind,
    pub metric: Metric,
}

impl TaskInstance {
    /// Check the schema invariants; `row` feeds the error message.
    pub fn validate(&self, row: usize) -> Result<()> {
        let fail = |message: String| Err(Error::Schema { row, message });
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        if self.gold.is_empty() {
            return fail(format!("item {}: empty gold set", self.id));
        }
        match self.task_kind {
            TaskKind::Multichoice => {
                if self.options.is_empty() {
                    return fail(format!("item {}: multichoice with no options", self.id));
                }
                for g in &self.gold {
                    if !self.options.iter().any(|o| &o.label == g) {
                        return fail(format!(
                            "item {}: gold label `{g}` not among option labels",
                            self.id
                        ));
                    }
                }
            }
            TaskKind::Freeform => {
                if !self.options.is_empty() {
                    return fail(format!("item {}: freeform with options", self.id));
                }
            }
        }
        Ok(())
    }

    pub fn option_labels(&self) -> Vec<&str> {
        self.options.iter().map(|o| o.label.as_str()).collect()
    }
}
