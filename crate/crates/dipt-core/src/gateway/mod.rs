//! Model gateway: chat-completion HTTP calls with retries, decoding
//! defaults, and record/replay cassettes.

mod cassette;
mod fingerprint;
mod retry;
mod types;

pub use cassette::{Cassette, CassetteRecord};
pub use fingerprint::{canonical_json, fingerprint, fingerprint_value};
pub use retry::RetryPolicy;
pub use types::{
    ChatMessage, ChatRequest, Completion, DecodingParams, FinishReason, Role, Usage,
};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::config::Config;
use crate::error::{Error, Result};

pub const API_KEY_VAR: &str = "DIPT_API_KEY";
pub const API_BASE_VAR: &str = "DIPT_API_BASE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl GatewayMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(Error::Config(format!(
                "unknown gateway mode `{other}` (expected live, record, or replay)"
            ))),
        }
    }
}

/// Everything needed to build a gateway handle.
#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub mode: GatewayMode,
    pub cassette_path: Option<PathBuf>,
    /// Overrides `DIPT_API_BASE`.
    pub base_url: Option<String>,
    /// Overrides `DIPT_API_KEY`.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl GatewayOptions {
    pub fn replay(cassette: &Path) -> Self {
        Self {
            mode: GatewayMode::Replay,
            cassette_path: Some(cassette.to_path_buf()),
            base_url: None,
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mode = GatewayMode::parse(cfg.get_or("mode", "replay"))?;
        let cassette_path = cfg.get("cassette").map(PathBuf::from);
        if mode != GatewayMode::Live && cassette_path.is_none() {
            return Err(Error::Config(
                "record/replay mode requires the `cassette` key".into(),
            ));
        }
        Ok(Self {
            mode,
            cassette_path,
            base_url: None,
            api_key: None,
            timeout: Duration::from_secs(cfg.get_u64("timeout_seconds", 120)?),
            retry: RetryPolicy {
                max_attempts: cfg.get_u64("retry.max_attempts", 5)? as u32,
                initial_delay: Duration::from_millis(cfg.get_u64("retry.initial_delay_ms", 1000)?),
                factor: cfg.get_f64("retry.factor", 2.0)?,
            },
        })
    }
}

struct HttpClient {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
}

/// A shareable handle issuing completions in one of three modes. Replay
/// never builds an HTTP client, so it provably makes no network calls.
pub struct Gateway {
    mode: GatewayMode,
    cassette: Option<Cassette>,
    http: Option<HttpClient>,
}

fn resolve_credential(explicit: Option<String>, var: &str) -> Result<String> {
    explicit
        .or_else(|| std::env::var(var).ok())
        .ok_or_else(|| Error::Config(format!("{var} is not set")))
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<FinishReason>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

impl Gateway {
    pub fn new(options: GatewayOptions) -> Result<Self> {
        let cassette = match (options.mode, &options.cassette_path) {
            (GatewayMode::Live, _) => None,
            (GatewayMode::Replay, Some(path)) => Some(Cassette::load(path)?),
            (GatewayMode::Record, Some(path)) => Some(Cassette::open_for_record(path)?),
            (_, None) => {
                return Err(Error::Config(
                    "record/replay mode requires a cassette path".into(),
                ))
            }
        };
        let http = match options.mode {
            GatewayMode::Replay => None,
            GatewayMode::Live | GatewayMode::Record => {
                let base_url = resolve_credential(options.base_url, API_BASE_VAR)?;
                let api_key = resolve_credential(options.api_key, API_KEY_VAR)?;
                let client = reqwest::blocking::Client::builder()
                    .timeout(options.timeout)
                    .build()
                    .map_err(|e| Error::Transport(e.to_string()))?;
                Some(HttpClient {
                    client,
                    base_url: base_url.trim_end_matches('/').to_string(),
                    api_key,
                    retry: options.retry,
                })
            }
        };
        Ok(Self { mode: options.mode, cassette, http })
    }

    pub fn replay(cassette: &Path) -> Result<Self> {
        Self::new(GatewayOptions::replay(cassette))
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Issue one completion according to the gateway mode.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion> {
        let fp = fingerprint(request);
        match self.mode {
            GatewayMode::Replay => self
                .cassette
                .as_ref()
                .expect("replay gateway has a cassette")
                .get(&fp)
                .ok_or(Error::CassetteMiss(fp)),
            GatewayMode::Live | GatewayMode::Record => {
                let http = self.http.as_ref().expect("live gateway has a client");
                let completion = http.send(request, &fp)?;
                if let Some(cassette) = &self.cassette {
                    cassette.append(CassetteRecord {
                        fingerprint: fp,
                        request: request.wire_body(),
                        completion: completion.clone(),
                    })?;
                }
                Ok(completion)
            }
        }
    }

    /// Issue many completions with at most `parallelism` in flight. Results
    /// come back in input order; each slot carries its own error.
    pub fn complete_batch(
        &self,
        requests: &[ChatRequest],
        parallelism: usize,
    ) -> Vec<Result<Completion>> {
        let workers = parallelism.max(1).min(requests.len().max(1));
        let next = AtomicUsize::new(0);
        let results = Mutex::new((0..requests.len()).map(|_| None).collect::<Vec<_>>());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= requests.len() {
                        break;
                    }
                    let out = self.complete(&requests[i]);
                    results.lock().unwrap()[i] = Some(out);
                });
            }
        });
        results
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|slot| slot.expect("every slot filled"))
            .collect()
    }
}

impl HttpClient {
    fn send(&self, request: &ChatRequest, fp: &str) -> Result<Completion> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = request.wire_body();
        let mut rng = rand::thread_rng();
        let mut last_failure = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1, &mut rng));
            }
            let started = Instant::now();
            let response = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match response {
                Ok(resp) => {
                    let status = resp.status();
                    let latency = started.elapsed().as_secs_f64();
                    if status.is_success() {
                        let wire: WireResponse = resp
                            .json()
                            .map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
                        let choice = wire
                            .choices
                            .into_iter()
                            .next()
                            .ok_or_else(|| Error::Transport("response had no choices".into()))?;
                        return Ok(Completion {
                            text: choice.message.content,
                            finish_reason: choice.finish_reason.unwrap_or(FinishReason::Other),
                            usage: wire.usage.unwrap_or_default(),
                            latency_seconds: latency,
                            fingerprint: fp.to_string(),
                        });
                    }
                    let message = resp.text().unwrap_or_default();
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(Error::Request {
                            status: status.as_u16(),
                            message: message.chars().take(200).collect(),
                        });
                    }
                    last_failure = format!("HTTP {}", status.as_u16());
                }
                Err(e) => {
                    last_failure = e.to_string();
                }
            }
        }
        Err(Error::Transport(format!(
            "giving up after {} attempts; last failure: {last_failure}",
            self.retry.max_attempts
        )))
    }
}
