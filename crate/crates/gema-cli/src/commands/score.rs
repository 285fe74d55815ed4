use std::path::PathBuf;

use clap::Args;

use gema_score::batch::{ScoredStudy, StudyInput, score_batch};
use gema_score::corpus::{load_corpus, write_scores};
use gema_score::extraction::{ExtractionPromptTemplate, FixtureStore, extract_entities};
use gema_score::model::EntityRole;
use gema_score::parallel::configure_thread_count;
use gema_score::scoring::{
    LlmAuditor, RuleBasedAuditor, SubjectiveAuditor, SubjectivePromptTemplate,
};

use crate::commands::{BackendChoice, GatewayHandle, build_gateway, load_policy, scoring_config};
use crate::io_util::emit;

#[derive(Args)]
pub struct ScoreArgs {
    /// JSONL corpus of report pairs.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pre-extracted entity fixtures (required with --backend offline-fixtures).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendChoice::OfflineFixtures)]
    pub backend: BackendChoice,
    /// Fixture directory for the mock backend.
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
    /// On-disk response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Synonym lexicon CSV overriding the built-in one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Weight of the clinical-accuracy half (default 0.8).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Per-error expressiveness penalty (default 0.05).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Destination score file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads for the scoring pass.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Abort on the first malformed corpus line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Print a per-study explanation after the scores.
    #[arg(long)]
    pub explain: bool,
}

pub fn run(args: ScoreArgs) -> anyhow::Result<()> {
    let config = scoring_config(args.alpha, args.lambda)?;
    let policy = load_policy(args.lexicon.as_deref())?;
    if let Some(threads) = args.parallelism {
        if !configure_thread_count(threads) {
            eprintln!("note: --parallelism ignored (sequential build or pool already running)");
        }
    }

    let load = load_corpus(&args.corpus, args.strict)?;
    if !load.malformed.is_empty() {
        eprintln!("skipped {} malformed corpus line(s)", load.malformed.len());
    }

    // The gateway must outlive the auditor that borrows it, so both live
    // here regardless of which branch below is taken.
    let handle: Option<GatewayHandle> = match args.backend {
        BackendChoice::OfflineFixtures => None,
        choice => Some(build_gateway(
            choice,
            args.mock_dir.as_deref(),
            args.cache_dir.as_deref(),
        )?),
    };

    let mut inputs: Vec<StudyInput> = Vec::with_capacity(load.pairs.len());
    match &handle {
        None => {
            let fixtures = args
                .fixtures
                .as_deref()
                .ok_or_else(|| anyhow::anyhow!("--fixtures is required with --backend offline-fixtures"))?;
            let store = FixtureStore::load(fixtures)?;
            for pair in &load.pairs {
                inputs.push(StudyInput {
                    study_id: pair.study_id.clone(),
                    reference_text: pair.reference_text.clone(),
                    candidate_text: pair.candidate_text.clone(),
                    reference_entities: store.require(&pair.study_id, EntityRole::Reference)?.clone(),
                    candidate_entities: store.require(&pair.study_id, EntityRole::Candidate)?.clone(),
                });
            }
        }
        Some(handle) => {
            let template = ExtractionPromptTemplate::builtin_v1();
            for pair in &load.pairs {
                inputs.push(StudyInput {
                    study_id: pair.study_id.clone(),
                    reference_text: pair.reference_text.clone(),
                    candidate_text: pair.candidate_text.clone(),
                    reference_entities: extract_entities(
                        &pair.reference_text,
                        &template,
                        &handle.gateway,
                        EntityRole::Reference,
                    )?,
                    candidate_entities: extract_entities(
                        &pair.candidate_text,
                        &template,
                        &handle.gateway,
                        EntityRole::Candidate,
                    )?,
                });
            }
        }
    }

    let rule_auditor = RuleBasedAuditor::default();
    let llm_auditor = handle
        .as_ref()
        .map(|h| LlmAuditor::new(SubjectivePromptTemplate::builtin_v1(), &h.gateway));
    let auditor: &(dyn SubjectiveAuditor + Sync) = match &llm_auditor {
        Some(auditor) => auditor,
        None => &rule_auditor,
    };

    let scored: Vec<ScoredStudy> = score_batch(inputs, auditor, &config, &policy)?;
    let records: Vec<_> = scored.iter().map(ScoredStudy::to_record).collect();
    let mut bytes = Vec::new();
    write_scores(&mut bytes, &records)?;
    emit(&args.out, &bytes)?;

    if args.explain {
        let mut ordered: Vec<&ScoredStudy> = scored.iter().collect();
        ordered.sort_by(|a, b| a.study_id.cmp(&b.study_id));
        for study in ordered {
            println!("=== {} ===", study.study_id);
            print!("{}", study.breakdown.explanation.render_text());
        }
    }

    eprintln!("scored {} studies", scored.len());
    if let Some(handle) = &handle {
        handle.report_calls();
    }
    Ok(())
}
