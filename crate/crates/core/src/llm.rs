//! Access to chat-completion models.
//!
//! [`CompletionProvider`] hides the backend: [`ReplayProvider`] answers from
//! recorded outputs keyed by `(rule_id, sample_index)` and never touches the
//! network; `HttpChatProvider` (behind the `http` feature) talks to an
//! OpenAI-style chat endpoint or a text-generation endpoint.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling settings sent with every completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub samples_per_rule: usize,
    pub max_output_tokens: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.25,
            top_p: 1.0,
            samples_per_rule: 5,
            max_output_tokens: 1024,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidSampling(m.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.samples_per_rule == 0 {
            return bad("samples_per_rule must be positive");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        Ok(())
    }
}

/// Request/response shape of a live endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiFlavor {
    /// `{"model", "messages", "temperature", "top_p", "max_tokens"}` →
    /// `choices[0].message.content` (GPT-4, GPT-3.5-turbo and compatible servers).
    #[default]
    OpenAiChat,
    /// `{"inputs", "parameters": {"temperature", "top_p", "max_new_tokens"}}` →
    /// `[{"generated_text"}]` (hosted StarCoder, Falcon, Bloomz).
    TextGeneration,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpChatSpec {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub flavor: ApiFlavor,
    /// Environment variable holding the API key; `None` for endpoints without auth.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

impl HttpChatSpec {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        HttpChatSpec {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            flavor: ApiFlavor::default(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
        }
    }
}

/// Which backend to use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    HttpChat(HttpChatSpec),
    Replay {
        fixture_path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { reason: String, attempts: u32 },
    #[error("provider rejected the request with status {status}: {reason}")]
    Rejected { status: u16, reason: String },
    #[error("no recorded output for rule `{rule_id}`, sample {sample_index}")]
    FixtureMiss { rule_id: String, sample_index: usize },
    #[error("credential variable `{var}` is not set")]
    AuthMissing { var: String },
    #[error("fixture line {line}: {reason}")]
    FixtureFormat { line: usize, reason: String },
    #[error("cannot read fixture {path}: {reason}")]
    FixtureIo { path: String, reason: String },
    #[error("unexpected provider response: {0}")]
    InvalidResponse(String),
    #[error("invalid sampling configuration: {0}")]
    InvalidSampling(String),
}

/// One completion call.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub rule_id: &'a str,
    pub prompt: &'a str,
    pub sampling: &'a SamplingConfig,
    pub sample_index: usize,
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, LlmError>;
}

/// One recorded model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub rule_id: String,
    pub sample_index: usize,
    pub raw_output: String,
}

/// Answers from recorded outputs; identical keys always give identical bytes.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    entries: HashMap<(String, usize), String>,
}

impl ReplayProvider {
    /// Builds a provider from records; a repeated key is an error.
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Result<Self, LlmError> {
        let mut entries = HashMap::new();
        for (i, r) in records.into_iter().enumerate() {
            let key = (r.rule_id, r.sample_index);
            if entries.contains_key(&key) {
                return Err(LlmError::FixtureFormat {
                    line: i + 1,
                    reason: format!("duplicate entry for rule `{}`, sample {}", key.0, key.1),
                });
            }
            entries.insert(key, r.raw_output);
        }
        Ok(ReplayProvider { entries })
    }

    /// Parses one JSON record per line; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(line).map_err(|e| LlmError::FixtureFormat {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(record);
            lines.push(i + 1);
        }
        Self::from_records(records).map_err(|e| match e {
            LlmError::FixtureFormat { line, reason } => LlmError::FixtureFormat {
                line: lines[line - 1],
                reason,
            },
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::FixtureIo {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_jsonl(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionProvider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, LlmError> {
        self.entries
            .get(&(request.rule_id.to_string(), request.sample_index))
            .cloned()
            .ok_or_else(|| LlmError::FixtureMiss {
                rule_id: request.rule_id.to_string(),
                sample_index: request.sample_index,
            })
    }
}

/// Instantiates the backend described by `spec`.
pub fn connect(spec: &ProviderSpec) -> Result<Box<dyn CompletionProvider>, LlmError> {
    match spec {
        ProviderSpec::Replay { fixture_path } => Ok(Box::new(ReplayProvider::load(fixture_path)?)),
        #[cfg(feature = "http")]
        ProviderSpec::HttpChat(http) => Ok(Box::new(HttpChatProvider::new(http.clone())?)),
        #[cfg(not(feature = "http"))]
        ProviderSpec::HttpChat(_) => Err(LlmError::ProviderUnavailable {
            reason: "built without http support".into(),
            attempts: 0,
        }),
    }
}

/// Delay before retry number `attempt` (0-based), doubling up to 16x the base.
pub fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    base * 2u32.pow(attempt.min(4))
}

#[cfg(feature = "http")]
pub use http::HttpChatProvider;

#[cfg(feature = "http")]
mod http {
    use std::sync::{Condvar, Mutex};
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{backoff_delay, ApiFlavor, CompletionProvider, CompletionRequest, HttpChatSpec, LlmError};

    /// Counting semaphore bounding in-flight requests.
    struct Slots {
        free: Mutex<usize>,
        cv: Condvar,
    }

    impl Slots {
        fn acquire(&self) -> SlotGuard<'_> {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cv.wait(free).unwrap();
            }
            *free -= 1;
            SlotGuard(self)
        }
    }

    struct SlotGuard<'a>(&'a Slots);

    impl Drop for SlotGuard<'_> {
        fn drop(&mut self) {
            *self.0.free.lock().unwrap() += 1;
            self.0.cv.notify_one();
        }
    }

    enum Attempt {
        Done(String),
        Retry(String),
        Fatal(LlmError),
    }

    pub struct HttpChatProvider {
        spec: HttpChatSpec,
        api_key: Option<String>,
        client: reqwest::blocking::Client,
        slots: Slots,
    }

    impl HttpChatProvider {
        /// Reads the credential from the environment and builds the client.
        pub fn new(spec: HttpChatSpec) -> Result<Self, LlmError> {
            let api_key = match &spec.api_key_env {
                Some(var) => match std::env::var(var) {
                    Ok(key) if !key.is_empty() => Some(key),
                    _ => return Err(LlmError::AuthMissing { var: var.clone() }),
                },
                None => None,
            };
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(spec.timeout_secs))
                .build()
                .map_err(|e| LlmError::ProviderUnavailable {
                    reason: e.to_string(),
                    attempts: 0,
                })?;
            let slots = Slots {
                free: Mutex::new(spec.max_in_flight.max(1)),
                cv: Condvar::new(),
            };
            Ok(HttpChatProvider {
                spec,
                api_key,
                client,
                slots,
            })
        }

        fn scrub(&self, text: &str) -> String {
            match &self.api_key {
                Some(key) => text.replace(key.as_str(), "***"),
                None => text.to_string(),
            }
        }

        fn body(&self, request: &CompletionRequest<'_>) -> Value {
            let s = request.sampling;
            match self.spec.flavor {
                ApiFlavor::OpenAiChat => json!({
                    "model": self.spec.model_name,
                    "messages": [{"role": "user", "content": request.prompt}],
                    "temperature": s.temperature,
                    "top_p": s.top_p,
                    "max_tokens": s.max_output_tokens,
                }),
                ApiFlavor::TextGeneration => json!({
                    "inputs": request.prompt,
                    "parameters": {
                        "temperature": s.temperature,
                        "top_p": s.top_p,
                        "max_new_tokens": s.max_output_tokens,
                        "return_full_text": false,
                    },
                }),
            }
        }

        fn text_of(&self, response: &Value) -> Option<String> {
            match self.spec.flavor {
                ApiFlavor::OpenAiChat => response
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string),
                ApiFlavor::TextGeneration => response
                    .pointer("/0/generated_text")
                    .or_else(|| response.get("generated_text"))
                    .and_then(Value::as_str)
                    .map(str::to_string),
            }
        }

        fn attempt(&self, body: &Value) -> Attempt {
            let mut req = self.client.post(&self.spec.endpoint).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let response = match req.send() {
                Ok(r) => r,
                // reqwest error messages carry the URL but never headers
                Err(e) => return Attempt::Retry(self.scrub(&e.to_string())),
            };
            let status = response.status();
            let text = response.text().unwrap_or_default();
            if status.is_success() {
                let parsed: Value = match serde_json::from_str(&text) {
                    Ok(v) => v,
                    Err(e) => return Attempt::Fatal(LlmError::InvalidResponse(e.to_string())),
                };
                return match self.text_of(&parsed) {
                    Some(content) => Attempt::Done(content),
                    None => Attempt::Fatal(LlmError::InvalidResponse("completion text not found in response".into())),
                };
            }
            let snippet: String = self.scrub(&text).chars().take(200).collect();
            if status.as_u16() == 429 || status.is_server_error() {
                Attempt::Retry(format!("status {status}: {snippet}"))
            } else {
                Attempt::Fatal(LlmError::Rejected {
                    status: status.as_u16(),
                    reason: snippet,
                })
            }
        }
    }

    impl CompletionProvider for HttpChatProvider {
        fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, LlmError> {
            let body = self.body(request);
            let _slot = self.slots.acquire();
            let base = Duration::from_millis(self.spec.retry_backoff_ms);
            let mut attempts = 0;
            loop {
                attempts += 1;
                match self.attempt(&body) {
                    Attempt::Done(text) => return Ok(text),
                    Attempt::Fatal(e) => return Err(e),
                    Attempt::Retry(reason) => {
                        if attempts > self.spec.max_retries {
                            return Err(LlmError::ProviderUnavailable { reason, attempts });
                        }
                        std::thread::sleep(backoff_delay(base, attempts - 1));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request<'a>(rule_id: &'a str, sample_index: usize, sampling: &'a SamplingConfig) -> CompletionRequest<'a> {
        CompletionRequest {
            rule_id,
            prompt: "ignored by replay",
            sampling,
            sample_index,
        }
    }

    #[test]
    fn defaults() {
        let s = SamplingConfig::default();
        assert_eq!(s.temperature, 0.25);
        assert_eq!(s.top_p, 1.0);
        assert_eq!(s.samples_per_rule, 5);
        s.validate().unwrap();
        let bad = SamplingConfig {
            temperature: 2.5,
            ..SamplingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingConfig {
            top_p: 0.0,
            ..SamplingConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn replay_lookup() {
        let fixture = r#"{"rule_id": "rule_01", "sample_index": 0, "raw_output": "FINAL_MTL: G(p)\n"}

{"rule_id": "rule_01", "sample_index": 1, "raw_output": "x"}"#;
        let replay = ReplayProvider::from_jsonl(fixture).unwrap();
        let s = SamplingConfig::default();
        assert_eq!(replay.complete(&request("rule_01", 0, &s)).unwrap(), "FINAL_MTL: G(p)\n");
        assert_eq!(
            replay.complete(&request("rule_99", 0, &s)),
            Err(LlmError::FixtureMiss {
                rule_id: "rule_99".into(),
                sample_index: 0
            })
        );
    }

    #[test]
    fn fixture_errors_name_the_line() {
        let err = ReplayProvider::from_jsonl("{\"rule_id\": \"a\", \"sample_index\": 0, \"raw_output\": \"\"}\nnot json").unwrap_err();
        assert!(matches!(err, LlmError::FixtureFormat { line: 2, .. }));
        let dup = "{\"rule_id\": \"a\", \"sample_index\": 0, \"raw_output\": \"\"}\n\n{\"rule_id\": \"a\", \"sample_index\": 0, \"raw_output\": \"\"}";
        assert!(matches!(
            ReplayProvider::from_jsonl(dup).unwrap_err(),
            LlmError::FixtureFormat { line: 3, .. }
        ));
    }

    #[test]
    fn provider_spec_fields_follow_kind() {
        let replay: ProviderSpec = serde_json::from_str(r#"{"kind": "replay", "fixture_path": "run.jsonl"}"#).unwrap();
        assert!(matches!(replay, ProviderSpec::Replay { .. }));
        let http: ProviderSpec =
            serde_json::from_str(r#"{"kind": "http_chat", "endpoint": "http://x", "model_name": "gpt-4"}"#).unwrap();
        assert!(matches!(http, ProviderSpec::HttpChat(_)));
        assert!(serde_json::from_str::<ProviderSpec>(r#"{"kind": "http_chat", "model_name": "gpt-4"}"#).is_err());
        assert!(serde_json::from_str::<ProviderSpec>(r#"{"kind": "replay"}"#).is_err());
    }

    #[test]
    fn backoff_is_bounded() {
        let base = Duration::from_millis(100);
        assert_eq!(backoff_delay(base, 0), Duration::from_millis(100));
        assert_eq!(backoff_delay(base, 2), Duration::from_millis(400));
        assert_eq!(backoff_delay(base, 30), Duration::from_millis(1600));
    }

    #[cfg(feature = "http")]
    #[test]
    fn missing_credential() {
        let mut spec = HttpChatSpec::new("http://127.0.0.1:9", "gpt-4");
        spec.api_key_env = Some("TRAFFIC_MTL_TEST_UNSET_KEY".into());
        assert_eq!(
            HttpChatProvider::new(spec).err(),
            Some(LlmError::AuthMissing {
                var: "TRAFFIC_MTL_TEST_UNSET_KEY".into()
            })
        );
    }
}
