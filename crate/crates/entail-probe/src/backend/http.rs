//! Generic JSON completion endpoint.
//!
//! The request body starts from the configured `body` object; the prompt,
//! token limit and temperature are written at their JSON pointers. The reply
//! is read through pointers as well: the completion text, and optionally the
//! answer-token probability, either directly, as a log-probability, or as
//! parallel token/log-probability arrays from which the first
//! non-whitespace token is taken.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, BackendError, BackendRequest, Completion};
use crate::error::{Error, Result};

fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_auth_prefix() -> String {
    "Bearer ".into()
}
fn default_prompt_field() -> String {
    "/prompt".into()
}
fn default_max_tokens_field() -> Option<String> {
    Some("/max_tokens".into())
}
fn default_temperature_field() -> Option<String> {
    Some("/temperature".into())
}
fn default_text_pointer() -> String {
    "/text".into()
}
fn default_max_retries() -> u32 {
    4
}
fn default_initial_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    30_000
}
fn default_timeout_secs() -> u64 {
    60
}

/// Adapter settings for one endpoint. Credentials are never stored here:
/// `auth_env` names the environment variable that holds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default = "default_prompt_field")]
    pub prompt_field: String,
    #[serde(default = "default_max_tokens_field")]
    pub max_tokens_field: Option<String>,
    #[serde(default = "default_temperature_field")]
    pub temperature_field: Option<String>,
    /// Fixed body fields such as a model name.
    #[serde(default)]
    pub body: serde_json::Map<String, Value>,
    #[serde(default = "default_text_pointer")]
    pub text_pointer: String,
    #[serde(default)]
    pub token_prob_pointer: Option<String>,
    #[serde(default)]
    pub token_logprob_pointer: Option<String>,
    #[serde(default)]
    pub tokens_pointer: Option<String>,
    #[serde(default)]
    pub token_logprobs_pointer: Option<String>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default)]
    pub requests_per_minute: Option<f64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl HttpBackendConfig {
    pub fn new(base_url: &str) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            auth_env: None,
            auth_header: default_auth_header(),
            auth_prefix: default_auth_prefix(),
            prompt_field: default_prompt_field(),
            max_tokens_field: default_max_tokens_field(),
            temperature_field: default_temperature_field(),
            body: serde_json::Map::new(),
            text_pointer: default_text_pointer(),
            token_prob_pointer: None,
            token_logprob_pointer: None,
            tokens_pointer: None,
            token_logprobs_pointer: None,
            max_retries: default_max_retries(),
            initial_backoff_ms: default_initial_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
            requests_per_minute: None,
            timeout_secs: default_timeout_secs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_secs: Option<f64>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::backend(format!("cannot build HTTP client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, TransportError> {
        let mut rb = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string());
        for (k, v) in headers {
            rb = rb.header(k.as_str(), v.as_str());
        }
        let resp = rb.send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let retry_after_secs = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok());
        let body = resp.text().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        Ok(HttpReply {
            status,
            retry_after_secs,
            body,
        })
    }
}

/// One recorded exchange. Transcripts are JSON lines of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    #[serde(flatten)]
    pub reply: HttpReply,
}

/// Answers from a recorded transcript, matching on the prompt text. Several
/// entries for one prompt are replayed in order, the last one repeating.
pub struct ReplayTransport {
    prompt_pointer: String,
    entries: Mutex<HashMap<String, VecDeque<HttpReply>>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: Vec<TranscriptEntry>, prompt_pointer: &str) -> Self {
        let mut map: HashMap<String, VecDeque<HttpReply>> = HashMap::new();
        for e in entries {
            map.entry(e.prompt).or_default().push_back(e.reply);
        }
        ReplayTransport {
            prompt_pointer: prompt_pointer.to_string(),
            entries: Mutex::new(map),
        }
    }

    pub fn load(path: &Path, prompt_pointer: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| Error::in_file(path, format!("line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self::from_entries(entries, prompt_pointer))
    }
}

impl Transport for ReplayTransport {
    fn post_json(&self, _url: &str, _headers: &[(String, String)], body: &str) -> Result<HttpReply, TransportError> {
        let fail = |m: String| TransportError {
            message: m,
            retryable: false,
        };
        let v: Value = serde_json::from_str(body).map_err(|e| fail(e.to_string()))?;
        let prompt = v
            .pointer(&self.prompt_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| fail("request has no prompt".into()))?;
        let mut map = self.entries.lock().expect("replay lock");
        let queue = map
            .get_mut(prompt)
            .ok_or_else(|| fail("no recorded response for this prompt".into()))?;
        if queue.len() > 1 {
            Ok(queue.pop_front().expect("non-empty"))
        } else {
            queue.front().cloned().ok_or_else(|| fail("empty transcript entry".into()))
        }
    }
}

/// Forwards to another transport and appends every exchange to a transcript.
pub struct RecordingTransport<T: Transport> {
    inner: T,
    prompt_pointer: String,
    out: Mutex<File>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, transcript: &Path, prompt_pointer: &str) -> Result<Self> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(transcript)
            .map_err(|e| Error::io(transcript, e))?;
        Ok(RecordingTransport {
            inner,
            prompt_pointer: prompt_pointer.to_string(),
            out: Mutex::new(out),
        })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, TransportError> {
        let reply = self.inner.post_json(url, headers, body)?;
        let prompt = serde_json::from_str::<Value>(body)
            .ok()
            .and_then(|v| v.pointer(&self.prompt_pointer).and_then(Value::as_str).map(str::to_string))
            .unwrap_or_default();
        let entry = TranscriptEntry {
            prompt,
            reply: reply.clone(),
        };
        if let Ok(mut line) = serde_json::to_string(&entry) {
            line.push('\n');
            let mut f = self.out.lock().expect("transcript lock");
            if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
                log::warn!("transcript write failed: {e}");
            }
        }
        Ok(reply)
    }
}

/// Writes `value` at a JSON pointer, creating objects along the way.
fn set_pointer(root: &mut Value, pointer: &str, value: Value) -> std::result::Result<(), String> {
    if pointer.is_empty() || !pointer.starts_with('/') {
        return Err(format!("field {pointer:?} is not a JSON pointer"));
    }
    let mut cur = root;
    let tokens: Vec<String> = pointer[1..]
        .split('/')
        .map(|t| t.replace("~1", "/").replace("~0", "~"))
        .collect();
    for (i, tok) in tokens.iter().enumerate() {
        let last = i + 1 == tokens.len();
        if let Value::Array(items) = cur {
            let idx: usize = tok.parse().map_err(|_| format!("{pointer}: {tok:?} is not an index"))?;
            let slot = items.get_mut(idx).ok_or_else(|| format!("{pointer}: index {idx} out of range"))?;
            if last {
                *slot = value;
                return Ok(());
            }
            cur = slot;
            continue;
        }
        if !cur.is_object() {
            *cur = Value::Object(serde_json::Map::new());
        }
        let map = cur.as_object_mut().expect("object");
        if last {
            map.insert(tok.clone(), value);
            return Ok(());
        }
        cur = map.entry(tok.clone()).or_insert(Value::Null);
    }
    unreachable!("pointer has at least one token")
}

struct Pacer {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl Pacer {
    fn wait(&self) {
        let delay = {
            let mut next = self.next.lock().expect("pacer lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    transport: Box<dyn Transport>,
    auth: Option<String>,
    pacer: Option<Pacer>,
}

impl HttpBackend {
    /// Reads the credential from `auth_env` now; a missing variable is a
    /// configuration error.
    pub fn new(id: &str, config: HttpBackendConfig, transport: Box<dyn Transport>) -> Result<Self> {
        let auth = match &config.auth_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::config(format!("backend {id}: environment variable {var} is not set"))
            })?),
        };
        let pacer = match config.requests_per_minute {
            None => None,
            Some(rpm) if rpm > 0.0 && rpm.is_finite() => Some(Pacer {
                interval: Duration::from_secs_f64(60.0 / rpm),
                next: Mutex::new(None),
            }),
            Some(rpm) => {
                return Err(Error::config(format!("backend {id}: requests_per_minute {rpm} must be positive")))
            }
        };
        let mut probe = Value::Object(config.body.clone());
        for field in [Some(&config.prompt_field), config.max_tokens_field.as_ref(), config.temperature_field.as_ref()]
            .into_iter()
            .flatten()
        {
            set_pointer(&mut probe, field, Value::Null).map_err(|e| Error::config(format!("backend {id}: {e}")))?;
        }
        Ok(HttpBackend {
            id: id.to_string(),
            config,
            transport,
            auth,
            pacer,
        })
    }

    fn body(&self, req: &BackendRequest) -> String {
        let mut v = Value::Object(self.config.body.clone());
        // Pointers were validated in `new`.
        let _ = set_pointer(&mut v, &self.config.prompt_field, Value::from(req.prompt.text.clone()));
        if let Some(f) = &self.config.max_tokens_field {
            let _ = set_pointer(&mut v, f, Value::from(req.max_tokens));
        }
        if let Some(f) = &self.config.temperature_field {
            let _ = set_pointer(&mut v, f, Value::from(req.temperature));
        }
        v.to_string()
    }

    fn headers(&self) -> Vec<(String, String)> {
        match &self.auth {
            Some(secret) => vec![(self.config.auth_header.clone(), format!("{}{secret}", self.config.auth_prefix))],
            None => Vec::new(),
        }
    }

    fn parse_reply(&self, body: &str) -> std::result::Result<Completion, String> {
        let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
        let text = v
            .pointer(&self.config.text_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| format!("response has no string at {}", self.config.text_pointer))?
            .to_string();
        let num = |p: &Option<String>| p.as_deref().and_then(|p| v.pointer(p)).and_then(Value::as_f64);
        let s_tok = if let Some(p) = num(&self.config.token_prob_pointer) {
            Some(p)
        } else if let Some(lp) = num(&self.config.token_logprob_pointer) {
            Some(lp.exp())
        } else {
            self.first_token_prob(&v)
        };
        Ok(Completion {
            text,
            s_tok: s_tok.filter(|p| (0.0..=1.0).contains(p)),
        })
    }

    fn first_token_prob(&self, v: &Value) -> Option<f64> {
        let tokens = v.pointer(self.config.tokens_pointer.as_deref()?)?.as_array()?;
        let lps = v.pointer(self.config.token_logprobs_pointer.as_deref()?)?.as_array()?;
        let i = tokens.iter().position(|t| t.as_str().is_some_and(|s| !s.trim().is_empty()))?;
        lps.get(i)?.as_f64().map(f64::exp)
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "http"
    }

    fn complete(&self, req: &BackendRequest) -> Result<Completion, BackendError> {
        let body = self.body(req);
        let headers = self.headers();
        let mut attempts = Vec::new();
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let cap = Duration::from_millis(self.config.max_backoff_ms);
        for attempt in 0..=self.config.max_retries {
            if let Some(p) = &self.pacer {
                p.wait();
            }
            let wait = match self.transport.post_json(&self.config.base_url, &headers, &body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return self.parse_reply(&reply.body).map_err(|m| BackendError { message: m, attempts });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    attempts.push(format!("attempt {}: status {}", attempt + 1, reply.status));
                    // A server-sent Retry-After is honoured as given; only
                    // our own backoff is capped.
                    reply
                        .retry_after_secs
                        .filter(|s| s.is_finite() && *s >= 0.0)
                        .map(Duration::from_secs_f64)
                        .unwrap_or(backoff.min(cap))
                }
                Ok(reply) => {
                    let snippet: String = reply.body.chars().take(200).collect();
                    attempts.push(format!("attempt {}: status {}", attempt + 1, reply.status));
                    return Err(BackendError {
                        message: format!("HTTP {}: {snippet}", reply.status),
                        attempts,
                    });
                }
                Err(e) => {
                    attempts.push(format!("attempt {}: {}", attempt + 1, e.message));
                    if !e.retryable {
                        return Err(BackendError {
                            message: e.message,
                            attempts,
                        });
                    }
                    backoff.min(cap)
                }
            };
            if attempt < self.config.max_retries {
                std::thread::sleep(wait);
                backoff = (backoff * 2).min(cap);
            }
        }
        Err(BackendError {
            message: format!("gave up after {} attempts", attempts.len()),
            attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn pointer_writes_nested_fields() {
        let mut v = json!({"model": "m", "messages": [{"role": "user"}]});
        set_pointer(&mut v, "/messages/0/content", json!("hi")).unwrap();
        set_pointer(&mut v, "/options/temperature", json!(0.0)).unwrap();
        assert_eq!(
            v,
            json!({"model": "m", "messages": [{"role": "user", "content": "hi"}], "options": {"temperature": 0.0}})
        );
        assert!(set_pointer(&mut v, "prompt", json!(1)).is_err());
        assert!(set_pointer(&mut v, "/messages/3/content", json!(1)).is_err());
    }

    #[test]
    fn token_probability_sources() {
        let mut cfg = HttpBackendConfig::new("http://unused");
        cfg.tokens_pointer = Some("/tokens".into());
        cfg.token_logprobs_pointer = Some("/logprobs".into());
        let b = HttpBackend::new("x", cfg, Box::new(ReplayTransport::from_entries(vec![], "/prompt"))).unwrap();
        let c = b
            .parse_reply(r#"{"text": " A) Entailment.", "tokens": [" ", "A", ")"], "logprobs": [-0.01, -0.5, -0.1]}"#)
            .unwrap();
        assert!((c.s_tok.unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let c = b.parse_reply(r#"{"text": "A"}"#).unwrap();
        assert_eq!(c.s_tok, None);
        assert!(b.parse_reply(r#"{"txt": "A"}"#).is_err());
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let mut cfg = HttpBackendConfig::new("http://unused");
        cfg.auth_env = Some("ENTAIL_PROBE_TEST_UNSET_VARIABLE".into());
        let err = HttpBackend::new("x", cfg, Box::new(ReplayTransport::from_entries(vec![], "/prompt")))
            .err()
            .unwrap();
        assert_eq!(err.kind, crate::error::ErrorKind::Config);
    }
}
