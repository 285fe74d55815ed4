use std::path::PathBuf;

use clap::Args;

use gema_score::corpus::write_annotations;
use gema_score::extraction::write_fixtures;
use gema_score::model::{EntityRole, EntitySet};
use gema_score::synth::{SynthConfig, generate_corpus};

use crate::io_util::atomic_write;

#[derive(Args)]
pub struct SynthArgs {
    /// Directory receiving corpus.jsonl, fixtures.jsonl, annotations.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().study_count)]
    pub studies: usize,
    #[arg(long, default_value_t = SynthConfig::default().entities_per_study)]
    pub entities: usize,
    #[arg(long, default_value_t = SynthConfig::default().max_errors)]
    pub max_errors: usize,
}

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        study_count: args.studies,
        entities_per_study: args.entities,
        max_errors: args.max_errors,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&config);

    let mut corpus_bytes = Vec::new();
    for pair in corpus.pairs() {
        serde_json::to_writer(&mut corpus_bytes, &pair)?;
        corpus_bytes.push(b'\n');
    }
    atomic_write(&args.out_dir.join("corpus.jsonl"), &corpus_bytes)?;

    let sets: Vec<(String, EntityRole, &EntitySet)> = corpus
        .studies
        .iter()
        .flat_map(|study| {
            [
                (
                    study.pair.study_id.clone(),
                    EntityRole::Reference,
                    &study.reference_entities,
                ),
                (
                    study.pair.study_id.clone(),
                    EntityRole::Candidate,
                    &study.candidate_entities,
                ),
            ]
        })
        .collect();
    let mut fixture_bytes = Vec::new();
    write_fixtures(&mut fixture_bytes, &sets)?;
    atomic_write(&args.out_dir.join("fixtures.jsonl"), &fixture_bytes)?;

    let mut annotation_bytes = Vec::new();
    write_annotations(&mut annotation_bytes, &corpus.annotations())?;
    atomic_write(&args.out_dir.join("annotations.csv"), &annotation_bytes)?;

    eprintln!(
        "generated {} studies (seed {}) into {}",
        corpus.studies.len(),
        config.seed,
        args.out_dir.display()
    );
    Ok(())
}
