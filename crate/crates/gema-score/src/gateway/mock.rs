//! Offline backend resolving prompts to canned fixtures by request digest.
//!
//! Fixtures live in a directory as `<digest>.json` files; an optional
//! `fallback.json` answers any request without a dedicated fixture. A
//! missing fixture without a fallback is an error, which forces tests to
//! declare the LLM behavior they rely on.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendResponse, GatewayError, PromptRequest, cache_key};

/// One canned completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub completion_text: String,
    #[serde(default)]
    pub truncated: bool,
}

impl MockFixture {
    pub fn new(completion_text: impl Into<String>) -> Self {
        MockFixture {
            completion_text: completion_text.into(),
            truncated: false,
        }
    }
}

/// File name of the optional catch-all fixture.
pub const FALLBACK_FIXTURE: &str = "fallback.json";

pub struct MockBackend {
    fixture_dir: PathBuf,
    fallback: Option<MockFixture>,
    calls: AtomicUsize,
}

impl MockBackend {
    /// Opens a fixture directory, loading `fallback.json` if present.
    pub fn new(fixture_dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let fixture_dir = fixture_dir.into();
        let fallback_path = fixture_dir.join(FALLBACK_FIXTURE);
        let fallback = if fallback_path.exists() {
            Some(read_fixture(&fallback_path)?)
        } else {
            None
        };
        Ok(MockBackend {
            fixture_dir,
            fallback,
            calls: AtomicUsize::new(0),
        })
    }

    /// How many times `execute` ran (cache hits never reach the backend, so
    /// this is the ground truth for "no network call happened").
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Writes a fixture answering exactly `request` into the directory.
    pub fn install_fixture(
        dir: &Path,
        request: &PromptRequest,
        fixture: &MockFixture,
    ) -> Result<String, GatewayError> {
        let digest = cache_key(request);
        let path = dir.join(format!("{digest}.json"));
        let body = serde_json::to_vec_pretty(fixture).expect("fixture serializes");
        std::fs::write(&path, body).map_err(|source| GatewayError::CacheIo {
            path: path.display().to_string(),
            source,
        })?;
        Ok(digest)
    }
}

fn read_fixture(path: &Path) -> Result<MockFixture, GatewayError> {
    let bytes = std::fs::read(path).map_err(|source| GatewayError::CacheIo {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| GatewayError::MalformedResponse {
        reason: format!("fixture {} is not valid JSON: {e}", path.display()),
    })
}

impl Backend for MockBackend {
    fn execute(&self, request: &PromptRequest) -> Result<BackendResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = cache_key(request);
        let path = self.fixture_dir.join(format!("{digest}.json"));
        let fixture = if path.exists() {
            read_fixture(&path)?
        } else if let Some(fallback) = &self.fallback {
            fallback.clone()
        } else {
            return Err(GatewayError::MissingFixture { digest });
        };
        Ok(BackendResponse {
            text: fixture.completion_text,
            truncated: fixture.truncated,
        })
    }

    fn id(&self) -> String {
        "mock".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{DecodingConfig, LlmGateway, ResponseCache, RetryPolicy};
    use std::sync::Arc;

    fn request(user: &str) -> PromptRequest {
        PromptRequest::new("sys", user, DecodingConfig::default()).unwrap()
    }

    #[test]
    fn fixture_resolution_by_digest() {
        let dir = tempfile::tempdir().unwrap();
        let req = request("what is in the image?");
        MockBackend::install_fixture(dir.path(), &req, &MockFixture::new("a lung")).unwrap();

        let backend = MockBackend::new(dir.path()).unwrap();
        let response = backend.execute(&req).unwrap();
        assert_eq!(response.text, "a lung");
        assert!(!response.truncated);
        assert_eq!(backend.call_count(), 1);
    }

    #[test]
    fn missing_fixture_without_fallback_errors() {
        let dir = tempfile::tempdir().unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        assert!(matches!(
            backend.execute(&request("unplanned prompt")),
            Err(GatewayError::MissingFixture { .. })
        ));
    }

    #[test]
    fn fallback_answers_everything_else() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(FALLBACK_FIXTURE),
            serde_json::to_vec(&MockFixture::new("[]")).unwrap(),
        )
        .unwrap();
        let specific = request("planned");
        MockBackend::install_fixture(dir.path(), &specific, &MockFixture::new("specific")).unwrap();

        let backend = MockBackend::new(dir.path()).unwrap();
        assert_eq!(backend.execute(&specific).unwrap().text, "specific");
        assert_eq!(backend.execute(&request("anything")).unwrap().text, "[]");
        assert_eq!(backend.execute(&request("else")).unwrap().text, "[]");
        assert_eq!(backend.call_count(), 3);
    }

    #[test]
    fn truncated_fixtures_pass_the_flag_through() {
        let dir = tempfile::tempdir().unwrap();
        let req = request("long request");
        let fixture = MockFixture {
            completion_text: "cut off mid".to_string(),
            truncated: true,
        };
        MockBackend::install_fixture(dir.path(), &req, &fixture).unwrap();

        let backend = Arc::new(MockBackend::new(dir.path()).unwrap());
        let gateway = LlmGateway::new(backend).with_retry(RetryPolicy::immediate(1));
        let result = gateway.complete(&req).unwrap();
        assert_eq!(result.text, "cut off mid");
        assert!(result.truncated);
    }

    #[test]
    fn mock_is_deterministic_across_calls() {
        let dir = tempfile::tempdir().unwrap();
        let req = request("stable?");
        MockBackend::install_fixture(dir.path(), &req, &MockFixture::new("always this")).unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        let a = backend.execute(&req).unwrap();
        let b = backend.execute(&req).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warm_cache_means_zero_backend_calls() {
        let fixtures = tempfile::tempdir().unwrap();
        let cache_dir = tempfile::tempdir().unwrap();
        let req = request("cache me");
        MockBackend::install_fixture(fixtures.path(), &req, &MockFixture::new("cached")).unwrap();

        let backend = Arc::new(MockBackend::new(fixtures.path()).unwrap());
        let gateway = LlmGateway::new(backend.clone())
            .with_cache(ResponseCache::new(cache_dir.path()).unwrap())
            .with_retry(RetryPolicy::immediate(1));
        assert!(!gateway.complete(&req).unwrap().cache_hit);
        assert_eq!(backend.call_count(), 1);

        // A fresh gateway over the same cache: the backend stays cold.
        let cold_backend = Arc::new(MockBackend::new(fixtures.path()).unwrap());
        let warm_gateway = LlmGateway::new(cold_backend.clone())
            .with_cache(ResponseCache::new(cache_dir.path()).unwrap());
        let result = warm_gateway.complete(&req).unwrap();
        assert!(result.cache_hit);
        assert_eq!(result.text, "cached");
        assert_eq!(cold_backend.call_count(), 0);
    }
}
