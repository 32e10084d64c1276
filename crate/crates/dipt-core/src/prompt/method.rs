//! Method specifications.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The underlying single-path reasoning method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMethod {
    Standard,
    Cot,
    Rar,
    Anl,
}

impl BaseMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Cot => "cot",
            Self::Rar => "rar",
            Self::Anl => "anl",
        }
    }
}

/// How the final answer is requested after multi-perspective analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStrategy {
    Default,
    Repeat,
    Verify,
    ConditionConsistency,
}

impl DecisionStrategy {
    pub fn label(self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::Repeat => "repeat",
            Self::Verify => "verify",
            Self::ConditionConsistency => "condition-consistency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "repeat" => Ok(Self::Repeat),
            "verify" => Ok(Self::Verify),
            "condition-consistency" | "condition_consistency" => Ok(Self::ConditionConsistency),
            other => Err(Error::Config(format!("unknown decision strategy: {other}"))),
        }
    }
}

/// A composable prompting method: base method, optional perspective-taking
/// wrapper, decision suffix, self-consistency count, and perspective hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub base: BaseMethod,
    pub dipt_wrapped: bool,
    pub decision: DecisionStrategy,
    pub self_consistency_samples: usize,
    pub perspective_hint: Option<usize>,
}

impl MethodSpec {
    pub fn new(base: BaseMethod) -> Self {
        Self {
            base,
            dipt_wrapped: false,
            decision: DecisionStrategy::Default,
            self_consistency_samples: 1,
            perspective_hint: None,
        }
    }

    pub fn dipt(base: BaseMethod) -> Self {
        Self { dipt_wrapped: true, ..Self::new(base) }
    }

    pub fn with_decision(mut self, decision: DecisionStrategy) -> Self {
        self.decision = decision;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.self_consistency_samples = n;
        self
    }

    pub fn with_perspectives(mut self, k: usize) -> Self {
        self.perspective_hint = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.decision != DecisionStrategy::Default && !self.dipt_wrapped {
            return Err(Error::Config(format!(
                "method `{self}`: decision strategies require the perspective wrapper"
            )));
        }
        if self.self_consistency_samples == 0 {
            return Err(Error::Config(format!(
                "method `{self}`: self-consistency sample count must be >= 1"
            )));
        }
        if self.perspective_hint == Some(0) {
            return Err(Error::Config(format!(
                "method `{self}`: perspective count must be >= 1"
            )));
        }
        Ok(())
    }

    /// Parse the compact notation `[dipt+]BASE[-sc:N][@DECISION][#kK]`,
    /// e.g. `cot`, `dipt+cot`, `cot-sc:5`, `dipt+cot@verify`, `dipt+cot#k4`.
    pub fn parse(spec: &str) -> Result<Self> {
        let original = spec;
        let mut rest = spec.trim().to_ascii_lowercase();
        let bad = |msg: &str| Error::Config(format!("bad method spec `{original}`: {msg}"));

        let mut hint = None;
        if let Some((head, k)) = rest.split_once("#k") {
            hint = Some(
                k.parse::<usize>()
                    .map_err(|_| bad("perspective count after #k must be an integer"))?,
            );
            rest = head.to_string();
        }
        let mut decision = DecisionStrategy::Default;
        if let Some((head, d)) = rest.split_once('@') {
            decision = DecisionStrategy::parse(d)?;
            rest = head.to_string();
        }
        let mut samples = 1usize;
        if let Some((head, n)) = rest.split_once("-sc:") {
            samples = n
                .parse()
                .map_err(|_| bad("sample count after -sc: must be an integer"))?;
            rest = head.to_string();
        }
        let dipt_wrapped = if let Some(head) = rest.strip_prefix("dipt+") {
            rest = head.to_string();
            true
        } else {
            false
        };
        let base = match rest.as_str() {
            "standard" => BaseMethod::Standard,
            "cot" => BaseMethod::Cot,
            "rar" => BaseMethod::Rar,
            "anl" => BaseMethod::Anl,
            other => {
                return Err(bad(&format!(
                    "unknown base method `{other}` (expected standard, cot, rar, or anl)"
                )))
            }
        };
        let spec = Self {
            base,
            dipt_wrapped,
            decision,
            self_consistency_samples: samples,
            perspective_hint: hint,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dipt_wrapped {
            write!(f, "dipt+")?;
        }
        match self.base {
            BaseMethod::Standard => write!(f, "standard")?,
            BaseMethod::Cot => write!(f, "cot")?,
            BaseMethod::Rar => write!(f, "rar")?,
            BaseMethod::Anl => write!(f, "anl")?,
        }
        if self.self_consistency_samples > 1 {
            write!(f, "-sc:{}", self.self_consistency_samples)?;
        }
        match self.decision {
            DecisionStrategy::Default => {}
            DecisionStrategy::Repeat => write!(f, "@repeat")?,
            DecisionStrategy::Verify => write!(f, "@verify")?,
            DecisionStrategy::ConditionConsistency => write!(f, "@condition-consistency")?,
        }
        if let Some(k) = self.perspective_hint {
            write!(f, "#k{k}")?;
        }
        Ok(())
    }
}
