use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::{
    apply_stops, Backend, BackendError, DimensionGuard, EmbeddingVector, GenerationRequest, GenerationResult,
    ScoreResult,
};
use crate::corpus::{LangCode, LanguagePair};
use crate::template::{PromptTemplate, Renderer};

/// Computes a continuation for a request, or `None` when it has no answer.
pub type Responder = Arc<dyn Fn(&GenerationRequest) -> Option<String> + Send + Sync>;

pub type EmbedFn = Arc<dyn Fn(&str, &LangCode) -> Vec<f64> + Send + Sync>;
pub type QeFn = Arc<dyn Fn(&str, &str) -> f64 + Send + Sync>;
pub type CometFn = Arc<dyn Fn(&str, &str, &str) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScoreMode {
    Fixed(ScoreResult),
    Table(HashMap<String, ScoreResult>),
    /// Stable per-text pseudo-random log-likelihood over whitespace tokens.
    Hashed,
    Func(Arc<dyn Fn(&str) -> ScoreResult + Send + Sync>),
}

#[derive(Clone)]
pub enum EmbedMode {
    /// Unit basis vector `e_i`, `i` derived from a hash of the text.
    HashBasis { dim: usize },
    Table(HashMap<String, Vec<f64>>),
    Func(EmbedFn),
}

#[derive(Clone)]
pub enum QeMode {
    Constant(f64),
    Func(QeFn),
    Unavailable,
}

#[derive(Clone)]
pub enum CometMode {
    Constant(f64),
    /// `max` when the hypothesis equals the reference, `min` otherwise.
    Echo { max: f64, min: f64 },
    Func(CometFn),
    Unavailable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub generate: usize,
    pub score: usize,
    pub embed: usize,
    pub qe: usize,
    pub comet: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.generate + self.score + self.embed + self.qe + self.comet
    }
}

#[derive(Default)]
struct Counters {
    generate: AtomicUsize,
    score: AtomicUsize,
    embed: AtomicUsize,
    qe: AtomicUsize,
    comet: AtomicUsize,
}

/// Table-driven backend for tests and examples.
///
/// In strict mode (the default) a prompt with no table entry and no
/// responder answer is an error; the mock never invents output. Call
/// counters let tests assert how many requests reached it.
pub struct MockBackend {
    strict: bool,
    exact: HashMap<String, String>,
    suffixes: Vec<(String, String)>,
    responder: Option<Responder>,
    score: ScoreMode,
    embed: EmbedMode,
    qe: QeMode,
    comet: CometMode,
    max_context_chars: Option<usize>,
    counters: Counters,
    dims: DimensionGuard,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend {
            strict: true,
            exact: HashMap::new(),
            suffixes: Vec::new(),
            responder: None,
            score: ScoreMode::Hashed,
            embed: EmbedMode::HashBasis { dim: 16 },
            qe: QeMode::Unavailable,
            comet: CometMode::Unavailable,
            max_context_chars: None,
            counters: Counters::default(),
            dims: DimensionGuard::default(),
        }
    }

    /// Unknown prompts yield an empty continuation instead of an error.
    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    /// Exact prompt → continuation.
    pub fn with_generation(mut self, prompt: impl Into<String>, continuation: impl Into<String>) -> Self {
        self.exact.insert(prompt.into(), continuation.into());
        self
    }

    /// Answers any prompt whose final block is the zero-shot rendering of
    /// `source` under `template` and `pair`, whatever demonstration precedes it.
    pub fn with_translation(
        mut self,
        template: &PromptTemplate,
        pair: &LanguagePair,
        source: &str,
        output: impl Into<String>,
    ) -> Self {
        let suffix = Renderer::default()
            .render_zero_shot(template, pair, source)
            .expect("mock translation entry renders");
        self.suffixes.push((suffix, output.into()));
        self
    }

    pub fn with_translations<'a>(
        mut self,
        template: &PromptTemplate,
        pair: &LanguagePair,
        entries: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        for (src, out) in entries {
            self = self.with_translation(template, pair, src, out);
        }
        self
    }

    pub fn with_responder(mut self, f: impl Fn(&GenerationRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    pub fn with_score(mut self, mode: ScoreMode) -> Self {
        self.score = mode;
        self
    }

    pub fn with_embed(mut self, mode: EmbedMode) -> Self {
        self.embed = mode;
        self
    }

    pub fn with_qe(mut self, mode: QeMode) -> Self {
        self.qe = mode;
        self
    }

    pub fn with_comet(mut self, mode: CometMode) -> Self {
        self.comet = mode;
        self
    }

    pub fn with_max_context_chars(mut self, limit: usize) -> Self {
        self.max_context_chars = Some(limit);
        self
    }

    pub fn calls(&self) -> CallCounts {
        let c = &self.counters;
        CallCounts {
            generate: c.generate.load(Ordering::SeqCst),
            score: c.score.load(Ordering::SeqCst),
            embed: c.embed.load(Ordering::SeqCst),
            qe: c.qe.load(Ordering::SeqCst),
            comet: c.comet.load(Ordering::SeqCst),
        }
    }

    fn lookup(&self, req: &GenerationRequest) -> Option<String> {
        if let Some(out) = self.exact.get(&req.prompt) {
            return Some(out.clone());
        }
        // longest matching suffix wins so nested sources resolve correctly
        if let Some((_, out)) = self
            .suffixes
            .iter()
            .filter(|(s, _)| req.prompt.ends_with(s.as_str()))
            .max_by_key(|(s, _)| s.len())
        {
            return Some(out.clone());
        }
        self.responder.as_ref().and_then(|f| f(req))
    }
}

fn digest(parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().into()
}

fn token_estimate(text: &str) -> usize {
    match text.split_whitespace().count() {
        0 if !text.is_empty() => 1,
        n => n,
    }
}

impl Backend for MockBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        self.counters.generate.fetch_add(1, Ordering::SeqCst);
        req.validate()?;
        let start = Instant::now();
        let raw = match self.lookup(req) {
            Some(out) => out,
            None if self.strict => {
                let head: String = req.prompt.chars().rev().take(60).collect::<Vec<_>>().into_iter().rev().collect();
                return Err(BackendError::Unknown(format!("prompt ending `{head}`")));
            }
            None => String::new(),
        };
        let text = apply_stops(&raw, &req.stop_sequences).to_string();
        Ok(GenerationResult {
            tokens_generated: token_estimate(&text),
            text,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    fn score_loglikelihood(&self, text: &str) -> Result<ScoreResult, BackendError> {
        self.counters.score.fetch_add(1, Ordering::SeqCst);
        if text.is_empty() {
            return Err(BackendError::EmptyInput("text to score"));
        }
        if let Some(limit) = self.max_context_chars {
            let n = text.chars().count();
            if n > limit {
                return Err(BackendError::ContextOverflow(format!("{n} chars > {limit}")));
            }
        }
        match &self.score {
            ScoreMode::Fixed(s) => Ok(*s),
            ScoreMode::Table(t) => t
                .get(text)
                .copied()
                .ok_or_else(|| BackendError::Unknown(format!("score for `{text}`"))),
            ScoreMode::Hashed => {
                let d = digest(&[text]);
                let unit = u16::from_le_bytes([d[0], d[1]]) as f64 / u16::MAX as f64;
                let tokens = token_estimate(text);
                Ok(ScoreResult {
                    total_logprob: -(0.5 + 4.5 * unit) * tokens as f64,
                    token_count: tokens,
                })
            }
            ScoreMode::Func(f) => Ok(f(text)),
        }
    }

    fn embed(&self, text: &str, lang: &LangCode) -> Result<EmbeddingVector, BackendError> {
        self.counters.embed.fetch_add(1, Ordering::SeqCst);
        if text.is_empty() {
            return Err(BackendError::EmptyInput("text to embed"));
        }
        let v = match &self.embed {
            EmbedMode::HashBasis { dim } => {
                let d = digest(&[text]);
                let i = u64::from_le_bytes(d[..8].try_into().unwrap()) as usize % dim;
                let mut v = vec![0.0; *dim];
                v[i] = 1.0;
                v
            }
            EmbedMode::Table(t) => t
                .get(text)
                .cloned()
                .ok_or_else(|| BackendError::Unknown(format!("embedding for `{text}`")))?,
            EmbedMode::Func(f) => f(text, lang),
        };
        self.dims.check(v.len())?;
        Ok(EmbeddingVector(v))
    }

    fn qe_score(&self, src: &str, hyp: &str) -> Result<f64, BackendError> {
        self.counters.qe.fetch_add(1, Ordering::SeqCst);
        if src.is_empty() || hyp.is_empty() {
            return Err(BackendError::EmptyInput("QE input"));
        }
        match &self.qe {
            QeMode::Constant(v) => Ok(*v),
            QeMode::Func(f) => Ok(f(src, hyp)),
            QeMode::Unavailable => Err(BackendError::Degraded("QE scorer not configured".into())),
        }
    }

    fn comet_score(&self, src: &str, hyp: &str, reference: &str) -> Result<f64, BackendError> {
        self.counters.comet.fetch_add(1, Ordering::SeqCst);
        if src.is_empty() || reference.is_empty() {
            return Err(BackendError::EmptyInput("COMET input"));
        }
        match &self.comet {
            CometMode::Constant(v) => Ok(*v),
            CometMode::Echo { max, min } => Ok(if hyp == reference { *max } else { *min }),
            CometMode::Func(f) => Ok(f(src, hyp, reference)),
            CometMode::Unavailable => Err(BackendError::Degraded("COMET scorer not configured".into())),
        }
    }
}
