//! Model backends and the cached query path.

mod http;
mod simulator;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use entail_probe_core::freq::FrequencyVerdict;
use entail_probe_core::prompt::{parse_answer, RenderedPrompt};
use entail_probe_core::{ModelResponse, NliSample, Proposition};

pub use http::{HttpBackend, HttpBackendConfig, HttpReply, RecordingTransport, ReplayTransport, ReqwestTransport, Transport, TransportError};
pub use simulator::SimulatorBackend;

use crate::cache::{cache_key, ResponseCache};

/// One prompt plus the context a backend may use to answer it.
#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub prompt: RenderedPrompt,
    pub max_tokens: u32,
    pub temperature: f64,
    pub run_id: String,
    pub hypothesis: Proposition,
    /// Present for inference prompts.
    pub sample: Option<NliSample>,
    pub frequency: Option<FrequencyVerdict>,
}

impl BackendRequest {
    pub fn sampling_key(&self) -> String {
        format!("max_tokens={};temperature={}", self.max_tokens, self.temperature)
    }
}

/// Raw backend output before parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub s_tok: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendError {
    pub message: String,
    /// One line per attempt that was made.
    pub attempts: Vec<String>,
}

impl BackendError {
    pub fn new(message: impl Into<String>) -> Self {
        BackendError {
            message: message.into(),
            attempts: Vec::new(),
        }
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)?;
        if !self.attempts.is_empty() {
            write!(f, " [{}]", self.attempts.join("; "))?;
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Short kind label for manifests ("simulator", "http", ...).
    fn kind(&self) -> &'static str;

    fn complete(&self, req: &BackendRequest) -> Result<Completion, BackendError>;

    /// Extra cache-key material for answers that depend on more than the
    /// prompt text.
    fn cache_scope(&self, _req: &BackendRequest) -> String {
        String::new()
    }

    /// Called once with every hypothesis the run will touch.
    fn prepare(&mut self, _hypotheses: &[&Proposition]) {}
}

/// Answers one request, consulting the cache first and persisting misses
/// before returning them.
pub fn query(backend: &dyn Backend, cache: &ResponseCache, req: &BackendRequest) -> Result<ModelResponse, BackendError> {
    if req.prompt.text.is_empty() {
        return Err(BackendError::new("empty prompt"));
    }
    if req.temperature.is_nan() || req.temperature < 0.0 {
        return Err(BackendError::new(format!("temperature {} is negative", req.temperature)));
    }
    let key = cache_key(backend.id(), &req.prompt.text, &req.sampling_key(), &backend.cache_scope(req));
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let c = backend.complete(req)?;
    let s_tok = c.s_tok.filter(|p| (0.0..=1.0).contains(p));
    let response = ModelResponse {
        choice: parse_answer(&c.text, req.prompt.kind),
        raw_text: c.text,
        s_tok,
        backend_id: backend.id().to_string(),
        cached: false,
    };
    cache
        .put(&key, &req.prompt.text, &response)
        .map_err(|e| BackendError::new(format!("cache write failed: {e}")))?;
    Ok(response)
}

/// Runs requests on up to `concurrency` threads. Results come back in
/// request order whatever the completion order.
pub fn query_all(
    backend: &dyn Backend,
    cache: &ResponseCache,
    requests: &[BackendRequest],
    concurrency: usize,
) -> Vec<Result<ModelResponse, BackendError>> {
    let workers = concurrency.clamp(1, requests.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ModelResponse, BackendError>>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let r = query(backend, cache, req);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every request answered"))
        .collect()
}
