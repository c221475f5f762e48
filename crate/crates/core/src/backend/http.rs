use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    apply_stops, Backend, BackendError, DimensionGuard, EmbeddingVector, GenerationRequest, GenerationResult,
    ScoreResult,
};
use crate::corpus::LangCode;

/// Environment variable holding the bearer token for the LLM endpoint.
pub const API_KEY_ENV: &str = "MTPROMPT_API_KEY";

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub dim: usize,
    #[serde(default)]
    pub models: serde_json::Value,
}

struct Gate {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

/// JSON-over-HTTP client for the generation endpoint and the scorer sidecar.
///
/// LLM routes: `POST {llm}/generate`, `POST {llm}/score`.
/// Scorer routes: `POST {scorer}/embed`, `/qe`, `/comet`, `GET {scorer}/health`.
pub struct HttpBackend {
    client: Client,
    llm_url: Option<String>,
    scorer_url: Option<String>,
    api_key: Option<String>,
    retry: RetryPolicy,
    gate: Gate,
    dims: DimensionGuard,
}

impl HttpBackend {
    pub fn new(llm_url: Option<String>, scorer_url: Option<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(HttpBackend {
            client,
            llm_url: llm_url.map(|u| u.trim_end_matches('/').to_string()),
            scorer_url: scorer_url.map(|u| u.trim_end_matches('/').to_string()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
            gate: Gate {
                limit: 8,
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            },
            dims: DimensionGuard::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Result<Self, BackendError> {
        self.client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(self)
    }

    /// Upper bound on concurrent in-flight requests.
    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.gate.limit = n.max(1);
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Queries the sidecar and pins the session's embedding dimension.
    pub fn health(&self) -> Result<Health, BackendError> {
        let base = self.scorer()?;
        let url = format!("{base}/health");
        let h: Health = self
            .with_retries(|| {
                let resp = self.client.get(&url).send().map_err(|e| Failure::Retryable(e.to_string()))?;
                decode(resp)
            })
            .map_err(degrade)?;
        self.dims.check(h.dim)?;
        Ok(h)
    }

    fn llm(&self) -> Result<&str, BackendError> {
        self.llm_url
            .as_deref()
            .ok_or_else(|| BackendError::Protocol("no LLM endpoint configured".into()))
    }

    fn scorer(&self) -> Result<&str, BackendError> {
        self.scorer_url
            .as_deref()
            .ok_or_else(|| BackendError::Degraded("no scorer endpoint configured".into()))
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, Failure>) -> Result<T, BackendError> {
        let _permit = self.gate.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    if attempts > self.retry.retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    log::debug!("attempt {attempts} failed: {message}");
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempts as u32 - 1));
                }
            }
        }
    }

    fn post<T: DeserializeOwned>(&self, url: &str, body: &serde_json::Value, auth: bool) -> Result<T, BackendError> {
        self.with_retries(|| {
            let mut req = self.client.post(url).json(body);
            if auth {
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
            }
            let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
            decode(resp)
        })
    }

    fn post_scorer<T: DeserializeOwned>(&self, route: &str, body: serde_json::Value) -> Result<T, BackendError> {
        let url = format!("{}/{route}", self.scorer()?);
        self.post(&url, &body, false).map_err(degrade)
    }
}

fn degrade(e: BackendError) -> BackendError {
    match e {
        BackendError::Transport { attempts, message } => {
            BackendError::Degraded(format!("{message} (after {attempts} attempt(s))"))
        }
        other => other,
    }
}

fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, Failure> {
    let status = resp.status();
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Err(Failure::Retryable(format!("HTTP {status}")));
    }
    let body = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
    if status == StatusCode::PAYLOAD_TOO_LARGE || body.contains("context_overflow") {
        return Err(Failure::Fatal(BackendError::ContextOverflow(body)));
    }
    if !status.is_success() {
        return Err(Failure::Fatal(BackendError::Protocol(format!("HTTP {status}: {body}"))));
    }
    serde_json::from_str(&body).map_err(|e| Failure::Fatal(BackendError::Protocol(format!("bad response body: {e}"))))
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
    tokens: usize,
}

#[derive(Deserialize)]
struct ScoreResponse {
    logprob: f64,
    tokens: usize,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct ScalarResponse {
    score: f64,
}

impl Backend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        req.validate()?;
        let url = format!("{}/generate", self.llm()?);
        let body = serde_json::to_value(req).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let start = Instant::now();
        let resp: GenerateResponse = self.post(&url, &body, true)?;
        let wall_time_s = start.elapsed().as_secs_f64();
        let text = apply_stops(&resp.text, &req.stop_sequences).to_string();
        Ok(GenerationResult {
            tokens_generated: if text.is_empty() { 0 } else { resp.tokens.max(1) },
            text,
            wall_time_s,
        })
    }

    fn score_loglikelihood(&self, text: &str) -> Result<ScoreResult, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyInput("text to score"));
        }
        let url = format!("{}/score", self.llm()?);
        let resp: ScoreResponse = self.post(&url, &json!({ "text_to_score": text }), true)?;
        if resp.tokens == 0 {
            return Err(BackendError::Protocol("score reported zero tokens".into()));
        }
        Ok(ScoreResult {
            total_logprob: resp.logprob,
            token_count: resp.tokens,
        })
    }

    fn embed(&self, text: &str, lang: &LangCode) -> Result<EmbeddingVector, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyInput("text to embed"));
        }
        let resp: EmbedResponse = self.post_scorer("embed", json!({ "text": text, "lang": lang }))?;
        self.dims.check(resp.vector.len())?;
        Ok(EmbeddingVector(resp.vector))
    }

    fn qe_score(&self, src: &str, hyp: &str) -> Result<f64, BackendError> {
        let resp: ScalarResponse = self.post_scorer("qe", json!({ "src": src, "hyp": hyp }))?;
        Ok(resp.score)
    }

    fn comet_score(&self, src: &str, hyp: &str, reference: &str) -> Result<f64, BackendError> {
        let resp: ScalarResponse = self.post_scorer("comet", json!({ "src": src, "hyp": hyp, "ref": reference }))?;
        Ok(resp.score)
    }
}
