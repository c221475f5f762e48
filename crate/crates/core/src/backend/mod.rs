//! Access to the language model and the scoring sidecar.
//!
//! Everything neural sits behind [`Backend`]: generation, log-likelihood
//! scoring, sentence embeddings, reference-free QE and reference-based
//! COMET. Three implementations ship with the crate: [`HttpBackend`] for
//! real endpoints, [`MockBackend`] for table-driven tests, and
//! [`CachedBackend`], a transparent persistent cache around either.

mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LangCode;

pub use cache::{CacheStats, CachedBackend};
pub use http::{Health, HttpBackend, RetryPolicy};
pub use mock::{CallCounts, CometFn, CometMode, EmbedFn, EmbedMode, MockBackend, QeFn, QeMode, Responder, ScoreMode};

pub const DEFAULT_BEAM_SIZE: usize = 2;
pub const DEFAULT_MAX_NEW_TOKENS: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("input exceeds the backend context ({0})")]
    ContextOverflow(String),

    #[error("scorer unavailable: {0}")]
    Degraded(String),

    #[error("no mock response for {0}")]
    Unknown(String),

    #[error("empty {0}")]
    EmptyInput(&'static str),
}

impl BackendError {
    pub fn is_degraded(&self) -> bool {
        matches!(self, BackendError::Degraded(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub beam_size: usize,
    pub max_new_tokens: usize,
    #[serde(rename = "stop")]
    pub stop_sequences: Vec<String>,
}

impl GenerationRequest {
    /// Beam 2, 256 new tokens, no stop sequences.
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            beam_size: DEFAULT_BEAM_SIZE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stops(mut self, stops: impl IntoIterator<Item = String>) -> Self {
        self.stop_sequences = stops.into_iter().collect();
        self
    }

    pub fn with_beam_size(mut self, beam: usize) -> Self {
        self.beam_size = beam;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::EmptyInput("prompt"));
        }
        if self.beam_size == 0 || self.max_new_tokens == 0 {
            return Err(BackendError::Protocol("beam_size and max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub tokens_generated: usize,
    pub wall_time_s: f64,
}

impl GenerationResult {
    /// The model declined to produce anything. This is data, not an error.
    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }

    pub fn seconds_per_token(&self) -> Option<f64> {
        (self.tokens_generated > 0).then(|| self.wall_time_s / self.tokens_generated as f64)
    }
}

/// Unnormalized log-likelihood (natural log) and the token count behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub total_logprob: f64,
    pub token_count: usize,
}

impl ScoreResult {
    pub fn per_token(&self) -> Result<f64, BackendError> {
        if self.token_count == 0 {
            return Err(BackendError::Protocol("score reported zero tokens".into()));
        }
        Ok(self.total_logprob / self.token_count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub trait Backend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError>;
    fn score_loglikelihood(&self, text: &str) -> Result<ScoreResult, BackendError>;
    fn embed(&self, text: &str, lang: &LangCode) -> Result<EmbeddingVector, BackendError>;
    fn qe_score(&self, src: &str, hyp: &str) -> Result<f64, BackendError>;
    fn comet_score(&self, src: &str, hyp: &str, reference: &str) -> Result<f64, BackendError>;
}

macro_rules! forward_backend {
    ($($ty:ty),*) => {$(
        impl<B: Backend + ?Sized> Backend for $ty {
            fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
                (**self).generate(req)
            }
            fn score_loglikelihood(&self, text: &str) -> Result<ScoreResult, BackendError> {
                (**self).score_loglikelihood(text)
            }
            fn embed(&self, text: &str, lang: &LangCode) -> Result<EmbeddingVector, BackendError> {
                (**self).embed(text, lang)
            }
            fn qe_score(&self, src: &str, hyp: &str) -> Result<f64, BackendError> {
                (**self).qe_score(src, hyp)
            }
            fn comet_score(&self, src: &str, hyp: &str, reference: &str) -> Result<f64, BackendError> {
                (**self).comet_score(src, hyp, reference)
            }
        }
    )*};
}

forward_backend!(&B, Box<B>, Arc<B>);

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn apply_stops<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Tracks the embedding dimension of a session; any change is a protocol error.
#[derive(Debug, Default)]
pub struct DimensionGuard(AtomicUsize);

impl DimensionGuard {
    pub fn check(&self, dim: usize) -> Result<(), BackendError> {
        if dim == 0 {
            return Err(BackendError::Protocol("zero-dimensional embedding".into()));
        }
        match self.0.compare_exchange(0, dim, Ordering::SeqCst, Ordering::SeqCst) {
            Ok(_) => Ok(()),
            Err(seen) if seen == dim => Ok(()),
            Err(seen) => Err(BackendError::Protocol(format!(
                "embedding dimension changed from {seen} to {dim}"
            ))),
        }
    }

    pub fn get(&self) -> Option<usize> {
        match self.0.load(Ordering::SeqCst) {
            0 => None,
            d => Some(d),
        }
    }
}
