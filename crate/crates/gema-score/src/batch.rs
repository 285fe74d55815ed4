//! Corpus-level scoring: runs the full per-study computation — entity
//! coverage, expressiveness audit, combination, and overlap baselines —
//! across many studies, in parallel when the `parallel` feature is active.

use serde::{Deserialize, Serialize};

use crate::baselines::{bleu1, meteor, rouge_l, tokenize};
use crate::corpus::ScoreRecord;
use crate::matching::MatchPolicy;
use crate::model::{Dimension, EntitySet};
use crate::parallel::{par_map, seq_map};
use crate::scoring::{
    ScoreBreakdown, ScoringConfig, ScoringError, SubjectiveAuditor, score_pair,
};
use crate::synth::SynthStudy;

/// Token-overlap reference metrics computed alongside the main score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub bleu1: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

/// Computes all three overlap baselines for one report pair.
pub fn baseline_scores(reference_text: &str, candidate_text: &str) -> BaselineScores {
    let reference = tokenize(reference_text);
    let candidate = tokenize(candidate_text);
    BaselineScores {
        bleu1: bleu1(&reference, &candidate),
        rouge_l: rouge_l(&reference, &candidate),
        meteor: meteor(&reference, &candidate),
    }
}

/// Everything needed to score one study.
#[derive(Debug, Clone)]
pub struct StudyInput {
    pub study_id: String,
    pub reference_text: String,
    pub candidate_text: String,
    pub reference_entities: EntitySet,
    pub candidate_entities: EntitySet,
}

impl StudyInput {
    pub fn from_synth(study: &SynthStudy) -> Self {
        StudyInput {
            study_id: study.pair.study_id.clone(),
            reference_text: study.pair.reference_text.clone(),
            candidate_text: study.pair.candidate_text.clone(),
            reference_entities: study.reference_entities.clone(),
            candidate_entities: study.candidate_entities.clone(),
        }
    }
}

/// One study's complete scoring output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStudy {
    pub study_id: String,
    pub breakdown: ScoreBreakdown,
    pub baselines: BaselineScores,
}

impl ScoredStudy {
    /// Flattens the result into the interchange record written to score
    /// files.
    pub fn to_record(&self) -> ScoreRecord {
        ScoreRecord {
            study_id: self.study_id.clone(),
            gema: self.breakdown.gema,
            s_obj: self.breakdown.objective.value,
            s_sub: self.breakdown.subjective.value,
            bleu1: self.baselines.bleu1,
            rouge_l: self.baselines.rouge_l,
            meteor: self.baselines.meteor,
            per_dimension: self
                .breakdown
                .objective
                .per_dimension
                .iter()
                .map(|(dim, score)| (dim.as_str().to_string(), score.harmonic))
                .collect(),
            false_predictions: self.breakdown.matching.tally(Dimension::Disease).fp,
            omissions: self.breakdown.matching.tally(Dimension::Disease).r#fn,
        }
    }
}

fn score_one(
    input: StudyInput,
    auditor: &(dyn SubjectiveAuditor + Sync),
    config: &ScoringConfig,
    policy: &MatchPolicy,
) -> Result<ScoredStudy, ScoringError> {
    let breakdown = score_pair(
        &input.reference_entities,
        &input.candidate_entities,
        &input.candidate_text,
        auditor,
        config,
        policy,
    )?;
    Ok(ScoredStudy {
        baselines: baseline_scores(&input.reference_text, &input.candidate_text),
        study_id: input.study_id,
        breakdown,
    })
}

/// Scores every study, preserving input order. Uses the data-parallel map
/// when the `parallel` feature is enabled.
pub fn score_batch(
    inputs: Vec<StudyInput>,
    auditor: &(dyn SubjectiveAuditor + Sync),
    config: &ScoringConfig,
    policy: &MatchPolicy,
) -> Result<Vec<ScoredStudy>, ScoringError> {
    config.validate()?;
    par_map(inputs, |input| score_one(input, auditor, config, policy))
        .into_iter()
        .collect()
}

/// Identical computation on a single thread, regardless of features. The
/// benchmark suite compares this against [`score_batch`]; a test pins their
/// outputs equal.
pub fn score_batch_sequential(
    inputs: Vec<StudyInput>,
    auditor: &(dyn SubjectiveAuditor + Sync),
    config: &ScoringConfig,
    policy: &MatchPolicy,
) -> Result<Vec<ScoredStudy>, ScoringError> {
    config.validate()?;
    seq_map(inputs, |input| score_one(input, auditor, config, policy))
        .into_iter()
        .collect()
}
