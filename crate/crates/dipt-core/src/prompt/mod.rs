//! Prompt rendering and method composition.

mod compose;
mod method;
mod store;
mod template;

pub use compose::{
    apply_demonstrations, apply_method, compose, decision_suffix, moderation_prompt,
    paraphrase_prompt, PromptAssets, DEFAULT_DECISION,
};
pub use method::{BaseMethod, DecisionStrategy, MethodSpec};
pub use store::TemplateStore;
pub use template::{
    parse_paraphrase_response, render_paraphrase_prompt, render_task_prompt, InstanceField,
    OptionStyle, ParaphraseTemplate, TaskTemplate,
};

/// Composed prompt text plus the ordered list of template ids applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub body: String,
    pub provenance: Vec<String>,
}

impl PromptText {
    pub fn new(body: String, tag: String) -> Self {
        debug_assert!(!body.is_empty());
        Self { body, provenance: vec![tag] }
    }
}
