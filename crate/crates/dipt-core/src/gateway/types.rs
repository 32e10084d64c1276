//! Chat-completion request and response types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling controls sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            max_tokens: None,
            seed: None,
        }
    }
}

impl DecodingParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// One completion request. `request_tag` labels the experiment trace and is
/// excluded from the fingerprint, so re-tagged replays still hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub decoding: DecodingParams,
    #[serde(default)]
    pub request_tag: String,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Result<Self> {
        if messages.is_empty() {
            return Err(Error::Config("chat request with no messages".into()));
        }
        Ok(Self {
            model_id: model_id.into(),
            messages,
            decoding: DecodingParams::default(),
            request_tag: String::new(),
        })
    }

    pub fn with_decoding(mut self, decoding: DecodingParams) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.request_tag = tag.into();
        self
    }

    /// The JSON body sent on the wire (also the fingerprint input).
    pub(crate) fn wire_body(&self) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.model_id,
            "messages": self.messages,
            "temperature": self.decoding.temperature,
            "top_p": self.decoding.top_p,
            "presence_penalty": self.decoding.presence_penalty,
            "frequency_penalty": self.decoding.frequency_penalty,
        });
        if let Some(m) = self.decoding.max_tokens {
            body["max_tokens"] = m.into();
        }
        if let Some(s) = self.decoding.seed {
            body["seed"] = s.into();
        }
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ContentFilter,
    #[serde(other)]
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One model response, as stored in cassettes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_seconds: f64,
    pub fingerprint: String,
}
