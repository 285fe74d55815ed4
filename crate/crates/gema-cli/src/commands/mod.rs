pub mod benchmark;
pub mod correlate;
pub mod extract;
pub mod score;
pub mod synth;

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use clap::ValueEnum;

use gema_score::gateway::{Backend, HttpBackend, LlmGateway, MockBackend, ResponseCache};
use gema_score::matching::{Lexicon, MatchPolicy};
use gema_score::scoring::ScoringConfig;

/// Where completions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// No backend: entity sets are read from a fixture file and the
    /// expressiveness audit uses the deterministic rule set.
    OfflineFixtures,
    /// Completions resolved from a directory of recorded fixtures.
    Mock,
    /// A live OpenAI-compatible endpoint configured by environment.
    Http,
}

/// A constructed gateway, with the mock backend kept reachable so commands
/// can report its call count.
pub struct GatewayHandle {
    pub gateway: LlmGateway,
    pub mock: Option<Arc<MockBackend>>,
}

impl GatewayHandle {
    /// Emits the standard backend-call summary for mock runs.
    pub fn report_calls(&self) {
        if let Some(mock) = &self.mock {
            eprintln!("backend calls: {}", mock.call_count());
        }
    }
}

pub fn build_gateway(
    choice: BackendChoice,
    mock_dir: Option<&Path>,
    cache_dir: Option<&Path>,
) -> anyhow::Result<GatewayHandle> {
    let (backend, mock): (Arc<dyn Backend>, Option<Arc<MockBackend>>) = match choice {
        BackendChoice::Mock => {
            let dir = mock_dir.context("--mock-dir is required with --backend mock")?;
            let mock = Arc::new(MockBackend::new(dir)?);
            (mock.clone(), Some(mock))
        }
        BackendChoice::Http => (Arc::new(HttpBackend::from_env()?), None),
        BackendChoice::OfflineFixtures => {
            anyhow::bail!("the offline-fixtures mode does not use a completion backend")
        }
    };
    let mut gateway = LlmGateway::new(backend);
    if let Some(dir) = cache_dir {
        gateway = gateway.with_cache(ResponseCache::new(dir)?);
    }
    Ok(GatewayHandle { gateway, mock })
}

/// Loads the comparison policy: the lexicon at `path`, or the built-in one.
pub fn load_policy(path: Option<&Path>) -> anyhow::Result<MatchPolicy> {
    let lexicon = match path {
        Some(path) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("opening lexicon {}", path.display()))?;
            Lexicon::from_csv_reader(file)?
        }
        None => Lexicon::builtin(),
    };
    Ok(MatchPolicy::new(lexicon))
}

/// The default scoring configuration with optional overrides, validated.
pub fn scoring_config(alpha: Option<f64>, lambda: Option<f64>) -> anyhow::Result<ScoringConfig> {
    let mut config = ScoringConfig::default();
    if let Some(alpha) = alpha {
        config.alpha = alpha;
    }
    if let Some(lambda) = lambda {
        config.lambda_penalty = lambda;
    }
    config.validate()?;
    Ok(config)
}
