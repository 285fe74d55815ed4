use std::path::PathBuf;

use clap::Args;

use gema_score::corpus::load_corpus;
use gema_score::extraction::{ExtractionPromptTemplate, extract_entities, write_fixtures};
use gema_score::model::{EntityRole, EntitySet};

use crate::commands::{BackendChoice, build_gateway};
use crate::io_util::atomic_write;

#[derive(Args)]
pub struct ExtractArgs {
    /// JSONL corpus of report pairs.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendChoice::Mock)]
    pub backend: BackendChoice,
    /// Fixture directory for the mock backend.
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
    /// On-disk response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Destination fixture file (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Abort on the first malformed corpus line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

pub fn run(args: ExtractArgs) -> anyhow::Result<()> {
    if args.backend == BackendChoice::OfflineFixtures {
        anyhow::bail!("extract needs a completion backend; use --backend mock or --backend http");
    }
    let load = load_corpus(&args.corpus, args.strict)?;
    if !load.malformed.is_empty() {
        eprintln!("skipped {} malformed corpus line(s)", load.malformed.len());
    }

    let handle = build_gateway(args.backend, args.mock_dir.as_deref(), args.cache_dir.as_deref())?;
    let template = ExtractionPromptTemplate::builtin_v1();

    let mut sets: Vec<(String, EntityRole, EntitySet)> = Vec::new();
    let mut structural_errors = 0usize;
    for pair in &load.pairs {
        for (role, text) in [
            (EntityRole::Reference, pair.reference_text.as_str()),
            (EntityRole::Candidate, pair.candidate_text.as_str()),
        ] {
            let set = extract_entities(text, &template, &handle.gateway, role)?;
            structural_errors += set.structural_error_count;
            sets.push((pair.study_id.clone(), role, set));
        }
    }

    let borrowed: Vec<(String, EntityRole, &EntitySet)> = sets
        .iter()
        .map(|(id, role, set)| (id.clone(), *role, set))
        .collect();
    let mut bytes = Vec::new();
    write_fixtures(&mut bytes, &borrowed)?;
    atomic_write(&args.out, &bytes)?;

    eprintln!(
        "extracted {} studies ({} structural error(s)) into {}",
        load.pairs.len(),
        structural_errors,
        args.out.display()
    );
    handle.report_calls();
    Ok(())
}
