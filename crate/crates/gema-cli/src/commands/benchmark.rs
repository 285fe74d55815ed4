use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use gema_score::batch::{ScoredStudy, StudyInput, score_batch};
use gema_score::corpus::load_corpus;
use gema_score::extraction::FixtureStore;
use gema_score::model::EntityRole;
use gema_score::scoring::RuleBasedAuditor;

use crate::commands::{load_policy, scoring_config};
use crate::io_util::emit;

#[derive(Args)]
pub struct BenchmarkArgs {
    /// JSONL corpus of report pairs.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pre-extracted entity fixtures.
    #[arg(long)]
    pub fixtures: PathBuf,
    /// Synonym lexicon CSV overriding the built-in one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Destination CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Abort on the first malformed corpus line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

/// Scores the corpus with the full pipeline alongside the three surface
/// baselines and writes one CSV row per study for side-by-side comparison.
pub fn run(args: BenchmarkArgs) -> anyhow::Result<()> {
    let config = scoring_config(args.alpha, args.lambda)?;
    let policy = load_policy(args.lexicon.as_deref())?;
    let load = load_corpus(&args.corpus, args.strict)?;
    if !load.malformed.is_empty() {
        eprintln!("skipped {} malformed corpus line(s)", load.malformed.len());
    }

    let store = FixtureStore::load(&args.fixtures)?;
    let mut inputs = Vec::with_capacity(load.pairs.len());
    for pair in &load.pairs {
        inputs.push(StudyInput {
            study_id: pair.study_id.clone(),
            reference_text: pair.reference_text.clone(),
            candidate_text: pair.candidate_text.clone(),
            reference_entities: store.require(&pair.study_id, EntityRole::Reference)?.clone(),
            candidate_entities: store.require(&pair.study_id, EntityRole::Candidate)?.clone(),
        });
    }

    let auditor = RuleBasedAuditor::default();
    let mut scored: Vec<ScoredStudy> = score_batch(inputs, &auditor, &config, &policy)?;
    scored.sort_by(|a, b| a.study_id.cmp(&b.study_id));

    let mut csv = String::from("study_id,bleu1,rouge_l,meteor,gema,s_obj,s_sub\n");
    for study in &scored {
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            study.study_id,
            study.baselines.bleu1,
            study.baselines.rouge_l,
            study.baselines.meteor,
            study.breakdown.gema,
            study.breakdown.objective.value,
            study.breakdown.subjective.value,
        )?;
    }
    emit(&args.out, csv.as_bytes())?;

    eprintln!("benchmarked {} studies", scored.len());
    Ok(())
}
