//! Method composition: perspective wrapper, base-method line, decision
//! suffix, and the optional answer-format footer.

use std::sync::OnceLock;

use regex::Regex;

use crate::config::{registry_default, Config};
use crate::corpus::{TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::prompt::method::{BaseMethod, DecisionStrategy, MethodSpec};
use crate::prompt::store::TemplateStore;
use crate::prompt::template::render_task_prompt;
use crate::prompt::PromptText;

/// The one decision suffix fixed by the published template; the others are
/// configurable.
pub const DEFAULT_DECISION: &str = "Choose the selected answers.";

/// All configurable wording used during composition.
#[derive(Debug, Clone)]
pub struct PromptAssets {
    pub dipt_multichoice: String,
    pub dipt_freeform: String,
    pub dipt_k_template: String,
    pub sentiment_word: String,
    pub decision_repeat: String,
    pub decision_verify: String,
    pub decision_condition_consistency: String,
    /// None suppresses the footer (golden-template comparisons).
    pub footer: Option<String>,
}

impl PromptAssets {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let own = |key: &str| cfg.get_or(key, registry_default(key)).to_string();
        let footer = if cfg.get_bool("footer", true)? {
            Some(own("footer.text"))
        } else {
            None
        };
        Ok(Self {
            dipt_multichoice: own("dipt.multichoice"),
            dipt_freeform: own("dipt.freeform"),
            dipt_k_template: own("dipt.k_perspectives"),
            sentiment_word: own("dipt.sentiment_word"),
            decision_repeat: own("decision.repeat"),
            decision_verify: own("decision.verify"),
            decision_condition_consistency: own("decision.condition_consistency"),
            footer,
        })
    }

    pub fn without_footer(mut self) -> Self {
        self.footer = None;
        self
    }
}

impl Default for PromptAssets {
    fn default() -> Self {
        Self::from_config(&Config::new()).expect("registry defaults are valid")
    }
}

fn option_word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\boption\b").unwrap())
}

/// The perspective instruction for one (task kind, sentiment flag, hint)
/// combination.
fn perspective_instruction(
    assets: &PromptAssets,
    kind: TaskKind,
    sentiment: bool,
    hint: Option<usize>,
) -> (String, String) {
    if let Some(k) = hint {
        return (
            assets.dipt_k_template.replace("{k}", &k.to_string()),
            format!("dipt:k={k}"),
        );
    }
    match kind {
        TaskKind::Freeform => (assets.dipt_freeform.clone(), "dipt:freeform".into()),
        TaskKind::Multichoice => {
            let text = if sentiment {
                option_word_re()
                    .replace_all(&assets.dipt_multichoice, assets.sentiment_word.as_str())
                    .into_owned()
            } else {
                assets.dipt_multichoice.clone()
            };
            (text, "dipt:multichoice".into())
        }
    }
}

fn base_method_line(base: BaseMethod) -> Option<&'static str> {
    match base {
        BaseMethod::Standard => None,
        BaseMethod::Cot => Some("Let's think step by step."),
        BaseMethod::Rar => Some("Rephrase and expand the question, and respond."),
        BaseMethod::Anl => Some(
            "Provide relevant problems as examples. Afterward, proceed to solve the initial problem.",
        ),
    }
}

/// The decision suffix for a strategy.
pub fn decision_suffix(strategy: DecisionStrategy, assets: &PromptAssets) -> PromptText {
    let body = match strategy {
        DecisionStrategy::Default => DEFAULT_DECISION,
        DecisionStrategy::Repeat => &assets.decision_repeat,
        DecisionStrategy::Verify => &assets.decision_verify,
        DecisionStrategy::ConditionConsistency => &assets.decision_condition_consistency,
    };
    PromptText::new(body.to_string(), format!("decision:{}", strategy.label()))
}

fn push_line(body: &mut String, line: &str) {
    body.push('\n');
    body.push_str(line);
}

/// Decorate a rendered task prompt with a method. Line order is fixed:
/// perspective instruction, base-method line, decision suffix (only with the
/// perspective wrapper), then the footer when one is configured.
pub fn apply_method(
    base: &PromptText,
    spec: &MethodSpec,
    kind: TaskKind,
    sentiment: bool,
    assets: &PromptAssets,
) -> Result<PromptText> {
    spec.validate()?;
    let mut out = base.clone();
    if spec.dipt_wrapped {
        let (line, tag) = perspective_instruction(assets, kind, sentiment, spec.perspective_hint);
        push_line(&mut out.body, &line);
        out.provenance.push(tag);
    }
    if let Some(line) = base_method_line(spec.base) {
        push_line(&mut out.body, line);
        out.provenance.push(format!("method:{}", spec.base.label()));
    }
    if spec.dipt_wrapped {
        let suffix = decision_suffix(spec.decision, assets);
        push_line(&mut out.body, &suffix.body);
        out.provenance.extend(suffix.provenance);
    }
    if let Some(footer) = &assets.footer {
        push_line(&mut out.body, footer);
        out.provenance.push("footer".into());
    }
    Ok(out)
}

/// Prepend demonstration text verbatim (k-shot ICL). A newline is inserted
/// only when the demonstrations do not already end with one.
pub fn apply_demonstrations(base: &PromptText, demos: &str) -> PromptText {
    if demos.is_empty() {
        return base.clone();
    }
    let mut body = String::with_capacity(demos.len() + 1 + base.body.len());
    body.push_str(demos);
    if !demos.ends_with('\n') {
        body.push('\n');
    }
    body.push_str(&base.body);
    let mut provenance = vec!["demos".to_string()];
    provenance.extend(base.provenance.iter().cloned());
    PromptText { body, provenance }
}

/// The moderation wrapper around a raw user prompt.
pub fn moderation_prompt(user_prompt: &str, store: &TemplateStore) -> Result<PromptText> {
    if user_prompt.is_empty() {
        return Err(Error::Input("moderation prompt is empty".into()));
    }
    let body = store.moderation.replacen("{prompt}", user_prompt, 1);
    Ok(PromptText::new(body, "moderation".to_string()))
}

/// The paraphrase request for an instance's dataset.
pub fn paraphrase_prompt(instance: &TaskInstance, store: &TemplateStore) -> Result<PromptText> {
    let template = store.get(&instance.dataset)?;
    crate::prompt::template::render_paraphrase_prompt(instance, template)
}

/// Render, prepend demonstrations, and decorate in one step.
pub fn compose(
    instance: &TaskInstance,
    store: &TemplateStore,
    spec: &MethodSpec,
    demos: Option<&str>,
    assets: &PromptAssets,
) -> Result<PromptText> {
    let template = store.get(&instance.dataset)?;
    let mut text = render_task_prompt(instance, template)?;
    if let Some(demos) = demos {
        text = apply_demonstrations(&text, demos);
    }
    apply_method(&text, spec, instance.task_kind, template.sentiment, assets)
}
