use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, EmbeddingVector, GenerationRequest, GenerationResult, ScoreResult};
use crate::corpus::LangCode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub invalidated: usize,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    payload: Value,
    response: Value,
}

/// Persistent content-addressed cache in front of another backend.
///
/// Each call is keyed by the SHA-256 of its canonical JSON payload
/// (operation kind plus every request field) and stored as
/// `<dir>/<key[..2]>/<key>.json`. Errors are never cached. An unreadable
/// or mismatching entry is discarded and recomputed.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    namespace: String,
    hits: AtomicUsize,
    misses: AtomicUsize,
    invalidated: AtomicUsize,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Protocol(format!("cache dir {}: {e}", dir.display())))?;
        Ok(CachedBackend {
            inner,
            dir,
            namespace: String::new(),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            invalidated: AtomicUsize::new(0),
        })
    }

    /// Separates entries of different models sharing one directory.
    pub fn with_namespace(mut self, ns: impl Into<String>) -> Self {
        self.namespace = ns.into();
        self
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
            invalidated: self.invalidated.load(Ordering::SeqCst),
        }
    }

    pub fn key(&self, kind: &str, request: Value) -> (String, Value) {
        let payload = json!({ "kind": kind, "namespace": self.namespace, "request": request });
        // serde_json maps are ordered, so this serialization is canonical
        let canonical = serde_json::to_string(&payload).expect("JSON value serializes");
        (hex::encode(Sha256::digest(canonical.as_bytes())), payload)
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read(&self, key: &str, payload: &Value) -> Option<Value> {
        let path = self.path_for(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if &entry.payload == payload => Some(entry.response),
            _ => {
                log::warn!("discarding corrupt cache entry {}", path.display());
                self.invalidated.fetch_add(1, Ordering::SeqCst);
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    fn write(&self, key: &str, payload: Value, response: Value) {
        let path = self.path_for(key);
        let dir = path.parent().expect("entry has a parent");
        let result = (|| -> std::io::Result<()> {
            fs::create_dir_all(dir)?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            serde_json::to_writer(&mut tmp, &Entry { payload, response })?;
            tmp.flush()?;
            tmp.persist(&path).map_err(|e| e.error)?;
            Ok(())
        })();
        if let Err(e) = result {
            log::warn!("could not write cache entry {}: {e}", path.display());
        }
    }

    fn cached<T: Serialize + DeserializeOwned>(
        &self,
        kind: &str,
        request: Value,
        compute: impl FnOnce() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let (key, payload) = self.key(kind, request);
        if let Some(resp) = self.read(&key, &payload) {
            match serde_json::from_value(resp) {
                Ok(v) => {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(v);
                }
                Err(_) => {
                    log::warn!("cache entry {key} has the wrong shape, recomputing");
                    self.invalidated.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let value = compute()?;
        let response = serde_json::to_value(&value).map_err(|e| BackendError::Protocol(e.to_string()))?;
        self.write(&key, payload, response);
        Ok(value)
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let request = serde_json::to_value(req).expect("request serializes");
        self.cached("generate", request, || self.inner.generate(req))
    }

    fn score_loglikelihood(&self, text: &str) -> Result<ScoreResult, BackendError> {
        self.cached("score", json!({ "text_to_score": text }), || self.inner.score_loglikelihood(text))
    }

    fn embed(&self, text: &str, lang: &LangCode) -> Result<EmbeddingVector, BackendError> {
        self.cached("embed", json!({ "text": text, "lang": lang }), || self.inner.embed(text, lang))
    }

    fn qe_score(&self, src: &str, hyp: &str) -> Result<f64, BackendError> {
        self.cached("qe", json!({ "src": src, "hyp": hyp }), || self.inner.qe_score(src, hyp))
    }

    fn comet_score(&self, src: &str, hyp: &str, reference: &str) -> Result<f64, BackendError> {
        self.cached("comet", json!({ "src": src, "hyp": hyp, "ref": reference }), || {
            self.inner.comet_score(src, hyp, reference)
        })
    }
}
