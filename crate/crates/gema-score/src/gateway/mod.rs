//! Uniform client for chat-completion-style LLM backends: deterministic
//! decoding defaults, content-addressed response caching, retry with
//! backoff, and a fully offline mock backend for tests.
//!
//! The gateway itself is `Sync`; callers fan requests out across studies
//! with whatever worker pool they choose, and the file cache tolerates
//! concurrent access because any two writers for one key hold identical
//! content (last write wins harmlessly).

mod http;
mod mock;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockFixture};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable carrying the API credential.
pub const ENV_API_KEY: &str = "GEMA_API_KEY";
/// Environment variable carrying the endpoint base URL.
pub const ENV_API_BASE: &str = "GEMA_API_BASE";
/// Environment variable carrying the response-cache directory.
pub const ENV_CACHE_DIR: &str = "GEMA_CACHE_DIR";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("user prompt must be non-empty")]
    EmptyUserPrompt,
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("backend returned HTTP {status}: {body_excerpt}")]
    Api { status: u16, body_excerpt: String },
    #[error("malformed backend response: {reason}")]
    MalformedResponse { reason: String },
    #[error("no fixture for request digest {digest} and no fallback configured")]
    MissingFixture { digest: String },
    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<GatewayError> },
    #[error("missing configuration: set {variable}")]
    MissingConfiguration { variable: &'static str },
    #[error("cache I/O failure at {path}: {source}")]
    CacheIo {
        path: String,
        source: std::io::Error,
    },
    #[error("cache entry corrupt at {path}: {reason}")]
    CorruptCacheEntry { path: String, reason: String },
}

impl GatewayError {
    /// Transport failures and throttling/server statuses are worth retrying;
    /// everything else is deterministic and retrying would only repeat it.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport { .. } => true,
            GatewayError::Api { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

/// Decoding parameters sent with every request. The default is the
/// deterministic profile: temperature 0, top-p 1, 8192-token budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 8192,
            model_name: "default".to_string(),
        }
    }
}

/// One single-shot prompt: system instructions plus user content.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub decoding: DecodingConfig,
}

impl PromptRequest {
    pub fn new(
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
        decoding: DecodingConfig,
    ) -> Result<Self, GatewayError> {
        let user_prompt = user_prompt.into();
        if user_prompt.is_empty() {
            return Err(GatewayError::EmptyUserPrompt);
        }
        Ok(PromptRequest {
            system_prompt: system_prompt.into(),
            user_prompt,
            decoding,
        })
    }
}

/// What a backend answered, before cache bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub text: String,
    /// Set when the backend stopped at its token budget; the text is
    /// passed through verbatim either way.
    pub truncated: bool,
}

/// A completion with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub cache_hit: bool,
    pub latency_ms: u64,
    pub truncated: bool,
}

/// Anything that can answer a [`PromptRequest`].
pub trait Backend: Send + Sync {
    fn execute(&self, request: &PromptRequest) -> Result<BackendResponse, GatewayError>;
    fn id(&self) -> String;
}

/// Stable content digest over every request field. Equal requests hash
/// equally; any field change (including decoding parameters) changes the
/// key. Fields are length-prefixed so boundaries cannot alias.
pub fn cache_key(request: &PromptRequest) -> String {
    let mut hasher = Sha256::new();
    for part in [
        &request.system_prompt,
        &request.user_prompt,
        &request.decoding.model_name,
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.update(request.decoding.temperature.to_le_bytes());
    hasher.update(request.decoding.top_p.to_le_bytes());
    hasher.update((request.decoding.max_tokens as u64).to_le_bytes());
    hex::encode(hasher.finalize())
}

/// One cached completion, stored as a standalone JSON document named by its
/// request digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_digest: String,
    pub completion_text: String,
    pub model_name: String,
    /// Unix seconds at write time.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// Content-addressed file cache: one JSON document per request digest.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| GatewayError::CacheIo {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.entry_path(key);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(GatewayError::CacheIo {
                    path: path.display().to_string(),
                    source,
                });
            }
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|e| GatewayError::CorruptCacheEntry {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if entry.request_digest != key {
            return Err(GatewayError::CorruptCacheEntry {
                path: path.display().to_string(),
                reason: format!("digest mismatch: entry says {}", entry.request_digest),
            });
        }
        Ok(Some(entry))
    }

    /// Writes an entry unless one already exists for the key. Values for a
    /// key are identical by construction, so skipping a rewrite (or losing
    /// a race to another writer) changes nothing.
    pub fn store(
        &self,
        key: &str,
        response: &BackendResponse,
        model_name: &str,
    ) -> Result<(), GatewayError> {
        let path = self.entry_path(key);
        if path.exists() {
            return Ok(());
        }
        let entry = CacheEntry {
            request_digest: key.to_string(),
            completion_text: response.text.clone(),
            model_name: model_name.to_string(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            truncated: response.truncated,
        };
        let body = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let io_err = |source| GatewayError::CacheIo {
            path: path.display().to_string(),
            source,
        };
        std::fs::write(&tmp, body).map_err(io_err)?;
        std::fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(())
    }
}

/// Retry schedule: `attempts` total tries, exponential backoff doubling
/// from `initial_backoff` between them.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Zero-delay variant for tests.
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            initial_backoff: Duration::ZERO,
        }
    }
}

/// The client facade: cache in front, retries behind, any [`Backend`] below.
pub struct LlmGateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmGateway {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Resolves a request: cache lookup, then backend execution with
    /// retries, then a single cache write on success.
    pub fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, GatewayError> {
        if request.user_prompt.is_empty() {
            return Err(GatewayError::EmptyUserPrompt);
        }
        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.load(&key)? {
                return Ok(CompletionResult {
                    text: entry.completion_text,
                    backend_id: self.backend.id(),
                    cache_hit: true,
                    latency_ms: 0,
                    truncated: entry.truncated,
                });
            }
        }

        let start = Instant::now();
        let response = self.execute_with_retries(request)?;
        let latency_ms = start.elapsed().as_millis() as u64;
        if let Some(cache) = &self.cache {
            cache.store(&key, &response, &request.decoding.model_name)?;
        }
        Ok(CompletionResult {
            text: response.text,
            backend_id: self.backend.id(),
            cache_hit: false,
            latency_ms,
            truncated: response.truncated,
        })
    }

    fn execute_with_retries(
        &self,
        request: &PromptRequest,
    ) -> Result<BackendResponse, GatewayError> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last_error = None;
        for attempt in 1..=attempts {
            match self.backend.execute(request) {
                Ok(response) => return Ok(response),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    last_error = Some(e);
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                    }
                    backoff *= 2;
                }
                Err(e) if e.is_retryable() => {
                    return Err(GatewayError::RetriesExhausted {
                        attempts,
                        last: Box::new(e),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        // Unreachable: the loop always returns. Kept for totality.
        Err(GatewayError::RetriesExhausted {
            attempts,
            last: Box::new(last_error.unwrap_or(GatewayError::Transport {
                message: "no attempt executed".to_string(),
            })),
        })
    }
}
