//! Compares the data-parallel batch scorer against the always-sequential
//! one on synthetic corpora of increasing size. Build with the default
//! `parallel` feature to measure the rayon path; a test elsewhere pins both
//! paths to identical outputs.

use criterion::{BenchmarkId, Criterion, Throughput, criterion_group, criterion_main};
use std::hint::black_box;

use gema_score::batch::{StudyInput, score_batch, score_batch_sequential};
use gema_score::matching::{Lexicon, MatchPolicy};
use gema_score::scoring::{RuleBasedAuditor, ScoringConfig};
use gema_score::synth::{SynthConfig, generate_corpus};

fn inputs_of_size(study_count: usize) -> Vec<StudyInput> {
    let corpus = generate_corpus(&SynthConfig {
        study_count,
        ..SynthConfig::default()
    });
    corpus.studies.iter().map(StudyInput::from_synth).collect()
}

fn bench_batch_scoring(c: &mut Criterion) {
    let auditor = RuleBasedAuditor::default();
    let config = ScoringConfig::default();
    let policy = MatchPolicy::new(Lexicon::builtin());

    let mut group = c.benchmark_group("score_batch");
    for &study_count in &[10usize, 50, 200] {
        let inputs = inputs_of_size(study_count);
        group.throughput(Throughput::Elements(study_count as u64));
        group.bench_with_input(
            BenchmarkId::new("parallel", study_count),
            &inputs,
            |b, inputs| {
                b.iter(|| {
                    score_batch(black_box(inputs.clone()), &auditor, &config, &policy).unwrap()
                })
            },
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", study_count),
            &inputs,
            |b, inputs| {
                b.iter(|| {
                    score_batch_sequential(black_box(inputs.clone()), &auditor, &config, &policy)
                        .unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_batch_scoring);
criterion_main!(benches);
