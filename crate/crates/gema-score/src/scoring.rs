//! Score computation: directional entity coverage per clinical dimension,
//! expressiveness auditing, grid rounding, and the weighted combination of
//! both halves with a human-readable explanation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::tokenize;
use crate::extraction::{ExtractionError, extract_json_array};
use crate::gateway::{DecodingConfig, LlmGateway, PromptRequest};
use crate::matching::{MatchPolicy, MatchResult, match_entities};
use crate::model::{Aspect, ClinicalEntity, Dimension, EntitySet, normalize};

/// Placeholder substituted with the report text in subjective prompts.
pub const SUBJECTIVE_REPORT_SLOT: &str = "{report}";
/// Placeholder substituted with the audited aspect name.
pub const ASPECT_SLOT: &str = "{aspect}";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("invalid scoring configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("subjective prompt template {template_id} lacks the {slot} slot")]
    MissingSlot { template_id: String, slot: String },
    #[error(transparent)]
    Audit(#[from] ExtractionError),
}

/// Weights, penalties, and the rounding grid for the combined score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Weight of the clinical-accuracy half; the expressiveness half gets
    /// `1 - alpha`.
    pub alpha: f64,
    /// Score deducted per expressiveness error before clamping at zero.
    pub lambda_penalty: f64,
    pub aspect_weights: BTreeMap<Aspect, f64>,
    pub dimension_weights: BTreeMap<Dimension, f64>,
    /// Sorted target values the aggregate expressiveness score snaps to.
    pub subjective_grid: Vec<f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 0.8,
            lambda_penalty: 0.05,
            aspect_weights: Aspect::ALL.iter().map(|&a| (a, 1.0 / 3.0)).collect(),
            dimension_weights: Dimension::ALL.iter().map(|&d| (d, 0.25)).collect(),
            subjective_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let err = |reason: String| Err(ScoringError::InvalidConfig { reason });
        if !(0.0..=1.0).contains(&self.alpha) {
            return err(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !self.lambda_penalty.is_finite() || self.lambda_penalty < 0.0 {
            return err(format!("lambda penalty {} must be >= 0", self.lambda_penalty));
        }
        for (label, sum) in [
            ("aspect", self.aspect_weights.values().sum::<f64>()),
            ("dimension", self.dimension_weights.values().sum::<f64>()),
        ] {
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return err(format!("{label} weights sum to {sum}, expected 1"));
            }
        }
        if self.aspect_weights.values().any(|&w| w < 0.0)
            || self.dimension_weights.values().any(|&w| w < 0.0)
        {
            return err("weights must be non-negative".to_string());
        }
        if self.subjective_grid.is_empty() {
            return err("subjective grid is empty".to_string());
        }
        if !self.subjective_grid.windows(2).all(|w| w[0] < w[1]) {
            return err("subjective grid must be strictly increasing".to_string());
        }
        if self
            .subjective_grid
            .iter()
            .any(|&g| !(0.0..=1.0).contains(&g))
        {
            return err("subjective grid values must lie in [0, 1]".to_string());
        }
        Ok(())
    }
}

/// Harmonic mean of two direction scores, defined as 0 when both are 0.
pub fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Does any entity in `source` account for `target_entity` on `dimension`?
///
/// For disease this is a plain equivalence lookup. Dependent dimensions are
/// anchored: the source entity must agree on disease and carry a matching
/// value for the dimension.
fn covered_by(
    source: &EntitySet,
    target_entity: &ClinicalEntity,
    dimension: Dimension,
    policy: &MatchPolicy,
) -> bool {
    source.entities.iter().any(|s| {
        if !policy.values_match(Dimension::Disease, &s.disease, &target_entity.disease) {
            return false;
        }
        if dimension == Dimension::Disease {
            return true;
        }
        match (s.dimension(dimension), target_entity.dimension(dimension)) {
            (Some(sv), Some(tv)) => policy.values_match(dimension, sv, tv),
            _ => false,
        }
    })
}

/// Fraction of `target` entities carrying `dimension` that are accounted
/// for by some `source` entity.
///
/// Set-level conventions come first: two empty sets agree perfectly (1.0),
/// one empty set against a non-empty one is total disagreement (0.0).
/// Within non-empty sets, a dimension nobody on the target side carries
/// scores 1.0 when the source side also carries none, 0.0 otherwise.
pub fn directional_score(
    source: &EntitySet,
    target: &EntitySet,
    dimension: Dimension,
    policy: &MatchPolicy,
) -> f64 {
    match (source.is_empty(), target.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        (false, false) => {}
    }
    let targets: Vec<&ClinicalEntity> = target.carrying(dimension).collect();
    if targets.is_empty() {
        return if source.carrying(dimension).next().is_none() {
            1.0
        } else {
            0.0
        };
    }
    let matched = targets
        .iter()
        .filter(|t| covered_by(source, t, dimension, policy))
        .count();
    matched as f64 / targets.len() as f64
}

/// Both directions plus their harmonic mean for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    /// How much of the candidate the reference supports (precision-like).
    pub candidate_directed: f64,
    /// How much of the reference the candidate covers (recall-like).
    pub reference_directed: f64,
    pub harmonic: f64,
}

/// The clinical-accuracy half of the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScore {
    pub value: f64,
    pub per_dimension: BTreeMap<Dimension, DimensionScore>,
}

/// Scores the candidate entity set against the reference across all
/// dimensions, combining each dimension's two directions harmonically and
/// the dimensions by their configured weights.
pub fn objective_score(
    reference: &EntitySet,
    candidate: &EntitySet,
    config: &ScoringConfig,
    policy: &MatchPolicy,
) -> ObjectiveScore {
    let per_dimension: BTreeMap<Dimension, DimensionScore> = Dimension::ALL
        .iter()
        .map(|&dim| {
            let candidate_directed = directional_score(reference, candidate, dim, policy);
            let reference_directed = directional_score(candidate, reference, dim, policy);
            (
                dim,
                DimensionScore {
                    candidate_directed,
                    reference_directed,
                    harmonic: harmonic(candidate_directed, reference_directed),
                },
            )
        })
        .collect();
    let value = per_dimension
        .iter()
        .map(|(dim, score)| {
            config.dimension_weights.get(dim).copied().unwrap_or(0.0) * score.harmonic
        })
        .sum();
    ObjectiveScore {
        value,
        per_dimension,
    }
}

/// Snaps `value` to the nearest grid point; exact midpoints round up.
pub fn round_to_grid(value: f64, grid: &[f64]) -> f64 {
    debug_assert!(!grid.is_empty());
    let mut best = grid[0];
    for &g in &grid[1..] {
        let (d_g, d_best) = ((g - value).abs(), (best - value).abs());
        if d_g < d_best || (d_g == d_best && g > best) {
            best = g;
        }
    }
    best
}

/// One aspect's audit outcome before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectScore {
    pub error_count: usize,
    /// `max(0, 1 - lambda * errors)`, not yet rounded.
    pub raw: f64,
}

/// The expressiveness half of the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveScore {
    /// The weighted aspect average snapped to the grid. This is the value
    /// that enters the final combination.
    pub value: f64,
    /// The weighted aspect average before grid rounding.
    pub raw_value: f64,
    pub per_aspect: BTreeMap<Aspect, AspectScore>,
}

/// Converts per-aspect error counts into the expressiveness score: each
/// aspect loses `lambda` per error (clamped at zero), the weighted average
/// is taken, and the result snaps to the configured grid before it ever
/// reaches the final combination.
pub fn subjective_score(
    error_counts: &BTreeMap<Aspect, usize>,
    config: &ScoringConfig,
) -> SubjectiveScore {
    let per_aspect: BTreeMap<Aspect, AspectScore> = Aspect::ALL
        .iter()
        .map(|&aspect| {
            let error_count = error_counts.get(&aspect).copied().unwrap_or(0);
            let raw = (1.0 - config.lambda_penalty * error_count as f64).max(0.0);
            (aspect, AspectScore { error_count, raw })
        })
        .collect();
    let raw_value = per_aspect
        .iter()
        .map(|(aspect, score)| config.aspect_weights.get(aspect).copied().unwrap_or(0.0) * score.raw)
        .sum();
    SubjectiveScore {
        value: round_to_grid(raw_value, &config.subjective_grid),
        raw_value,
        per_aspect,
    }
}

/// The final combination of the two halves.
pub fn gema_score(objective: f64, subjective: f64, alpha: f64) -> f64 {
    alpha * objective + (1.0 - alpha) * subjective
}

/// Generalized combination over arbitrary weighted part lists. With a
/// single unit-weight part on each side this reduces exactly to
/// [`gema_score`].
pub fn combined_score(
    objective_parts: &[(f64, f64)],
    subjective_parts: &[(f64, f64)],
    alpha: f64,
) -> f64 {
    let weighted_sum = |parts: &[(f64, f64)]| parts.iter().map(|(w, s)| w * s).sum::<f64>();
    alpha * weighted_sum(objective_parts) + (1.0 - alpha) * weighted_sum(subjective_parts)
}

/// A versioned prompt pair for expressiveness auditing, with report and
/// aspect slots in the user skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectivePromptTemplate {
    pub template_id: String,
    pub system_prompt: String,
    pub user_prompt_skeleton: String,
}

impl SubjectivePromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt_skeleton: impl Into<String>,
    ) -> Result<Self, ScoringError> {
        let template = SubjectivePromptTemplate {
            template_id: template_id.into(),
            system_prompt: system_prompt.into(),
            user_prompt_skeleton: user_prompt_skeleton.into(),
        };
        for slot in [SUBJECTIVE_REPORT_SLOT, ASPECT_SLOT] {
            if !template.user_prompt_skeleton.contains(slot) {
                return Err(ScoringError::MissingSlot {
                    template_id: template.template_id,
                    slot: slot.to_string(),
                });
            }
        }
        Ok(template)
    }

    /// The template shipped with this crate.
    pub fn builtin_v1() -> Self {
        Self::new(
            "subjective-v1",
            include_str!("../assets/prompts/subjective_system_v1.txt").trim_end(),
            include_str!("../assets/prompts/subjective_user_v1.txt").trim_end(),
        )
        .expect("builtin template carries both slots")
    }
}

/// Renders the audit prompt for one report and aspect with deterministic
/// decoding.
pub fn build_subjective_prompt(
    report_text: &str,
    aspect: Aspect,
    template: &SubjectivePromptTemplate,
) -> PromptRequest {
    let user_prompt = template
        .user_prompt_skeleton
        .replace(ASPECT_SLOT, aspect.as_str())
        .replace(SUBJECTIVE_REPORT_SLOT, report_text);
    PromptRequest::new(
        template.system_prompt.clone(),
        user_prompt,
        DecodingConfig::default(),
    )
    .expect("rendered audit prompt is never empty")
}

/// Produces the list of expressiveness issues found in a report for one
/// aspect. Each returned string is one counted error.
pub trait SubjectiveAuditor {
    fn audit(&self, report_text: &str, aspect: Aspect) -> Result<Vec<String>, ScoringError>;
}

/// LLM-backed auditor: one completion per aspect, parsed as a JSON array
/// of issue strings.
pub struct LlmAuditor<'a> {
    template: SubjectivePromptTemplate,
    gateway: &'a LlmGateway,
}

impl<'a> LlmAuditor<'a> {
    pub fn new(template: SubjectivePromptTemplate, gateway: &'a LlmGateway) -> Self {
        LlmAuditor { template, gateway }
    }
}

impl SubjectiveAuditor for LlmAuditor<'_> {
    fn audit(&self, report_text: &str, aspect: Aspect) -> Result<Vec<String>, ScoringError> {
        let request = build_subjective_prompt(report_text, aspect, &self.template);
        let completion = self
            .gateway
            .complete(&request)
            .map_err(ExtractionError::from)?;
        let items = extract_json_array(&completion.text)?;
        Ok(items
            .into_iter()
            .map(|item| match item {
                Value::String(s) => s,
                other => other.to_string(),
            })
            .collect())
    }
}

/// Verbs and verb-like participles accepted as evidence of a complete
/// clause in report prose.
const CLAUSE_VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "has", "have", "had", "shows", "show",
    "showed", "showing", "demonstrates", "demonstrate", "demonstrated", "reveals", "reveal",
    "revealed", "notes", "note", "noted", "seen", "identified", "observed", "appears", "appear",
    "appeared", "remains", "remain", "remained", "persists", "persist", "persisted", "suggests",
    "suggest", "suggested", "visualized", "improved", "resolved", "worsened", "increased",
    "decreased", "developed", "represents", "represent", "compared", "excludes", "exclude",
    "excluded", "obscures", "obscured", "contains", "contain", "measures", "measuring",
];

/// Suffixes that mark a token as clinical vocabulary subject to the
/// terminology check.
const CLINICAL_SUFFIXES: &[&str] = &[
    "osis", "itis", "ectasis", "oma", "emia", "megaly", "thorax", "pathy",
];

/// Deterministic offline auditor built on three surface rules: repeated
/// consecutive words (fluency), sentences with no recognizable verb
/// (grammar), and clinical-suffix tokens missing from the accepted
/// vocabulary (terminology). A cheap stand-in for the LLM auditor wherever
/// reproducibility matters more than judgment.
pub struct RuleBasedAuditor {
    verbs: BTreeSet<&'static str>,
    vocabulary: BTreeSet<String>,
}

impl Default for RuleBasedAuditor {
    fn default() -> Self {
        let vocabulary = include_str!("../assets/terminology/terms.txt")
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'))
            .map(normalize)
            .collect();
        RuleBasedAuditor {
            verbs: CLAUSE_VERBS.iter().copied().collect(),
            vocabulary,
        }
    }
}

impl RuleBasedAuditor {
    /// Sentences shorter than this many tokens are exempt from the grammar
    /// rule, so headers and terse impressions do not flag.
    const MIN_CLAUSE_TOKENS: usize = 3;

    fn fluency_issues(&self, report_text: &str) -> Vec<String> {
        // Scoped per sentence: the same word legitimately closing one
        // sentence and opening the next is not a repetition.
        report_text
            .split(['.', '!', '?', ';'])
            .flat_map(|sentence| {
                let tokens = tokenize(sentence);
                tokens
                    .tokens()
                    .windows(2)
                    .filter(|pair| pair[0] == pair[1])
                    .map(|pair| format!("repeated word \"{}\"", pair[0]))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn grammar_issues(&self, report_text: &str) -> Vec<String> {
        report_text
            .split(['.', '!', '?', ';'])
            .filter_map(|sentence| {
                let tokens = tokenize(sentence);
                if tokens.len() < Self::MIN_CLAUSE_TOKENS
                    || tokens.tokens().iter().any(|t| self.verbs.contains(t.as_str()))
                {
                    return None;
                }
                let trimmed = sentence.trim();
                let preview: String = trimmed.chars().take(60).collect();
                Some(format!("no verb in sentence \"{preview}\""))
            })
            .collect()
    }

    fn terminology_issues(&self, report_text: &str) -> Vec<String> {
        tokenize(report_text)
            .tokens()
            .iter()
            .filter(|token| {
                CLINICAL_SUFFIXES
                    .iter()
                    .any(|suffix| token.len() > suffix.len() && token.ends_with(suffix))
                    && !self.vocabulary.contains(token.as_str())
            })
            .map(|token| format!("unrecognized clinical term \"{token}\""))
            .collect()
    }
}

impl SubjectiveAuditor for RuleBasedAuditor {
    fn audit(&self, report_text: &str, aspect: Aspect) -> Result<Vec<String>, ScoringError> {
        Ok(match aspect {
            Aspect::Fluency => self.fluency_issues(report_text),
            Aspect::Grammar => self.grammar_issues(report_text),
            Aspect::Terminology => self.terminology_issues(report_text),
        })
    }
}

/// Human-readable account of where the score came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    /// Candidate findings with no reference counterpart, in candidate order.
    pub false_predictions: Vec<String>,
    /// Reference findings the candidate missed, in reference order.
    pub omissions: Vec<String>,
    pub per_dimension_notes: Vec<String>,
    /// Aspect-tagged expressiveness issues.
    pub subjective_error_log: Vec<String>,
}

fn describe_entity(entity: &ClinicalEntity) -> String {
    let mut parts = Vec::new();
    for dim in [Dimension::Location, Dimension::Severity, Dimension::Uncertainty] {
        if let Some(value) = entity.dimension(dim) {
            parts.push(format!("{dim}: {value}"));
        }
    }
    if parts.is_empty() {
        entity.disease.clone()
    } else {
        format!("{} ({})", entity.disease, parts.join("; "))
    }
}

impl Explanation {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, lines: &[String]| {
            out.push_str(&format!("{title} ({}):\n", lines.len()));
            for line in lines {
                out.push_str(&format!("  - {line}\n"));
            }
        };
        section("False predictions", &self.false_predictions);
        section("Omissions", &self.omissions);
        section("Dimension scores", &self.per_dimension_notes);
        section("Expressiveness issues", &self.subjective_error_log);
        out
    }
}

/// Everything computed for one report pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub gema: f64,
    pub objective: ObjectiveScore,
    pub subjective: SubjectiveScore,
    pub matching: MatchResult,
    pub explanation: Explanation,
}

/// Scores one candidate against its reference end to end: entity coverage
/// across dimensions, expressiveness audit of the candidate prose, the
/// weighted combination, and the explanation ledger.
pub fn score_pair(
    reference: &EntitySet,
    candidate: &EntitySet,
    candidate_text: &str,
    auditor: &dyn SubjectiveAuditor,
    config: &ScoringConfig,
    policy: &MatchPolicy,
) -> Result<ScoreBreakdown, ScoringError> {
    config.validate()?;

    let objective = objective_score(reference, candidate, config, policy);
    let matching = match_entities(reference, candidate, policy);

    let mut error_counts = BTreeMap::new();
    let mut subjective_error_log = Vec::new();
    for aspect in Aspect::ALL {
        let issues = auditor.audit(candidate_text, aspect)?;
        error_counts.insert(aspect, issues.len());
        subjective_error_log.extend(issues.into_iter().map(|issue| format!("{aspect}: {issue}")));
    }
    let subjective = subjective_score(&error_counts, config);

    let anchored_candidates: BTreeSet<usize> = matching
        .matched_pairs
        .iter()
        .map(|p| p.candidate_index)
        .collect();
    let anchored_references: BTreeSet<usize> = matching
        .matched_pairs
        .iter()
        .map(|p| p.reference_index)
        .collect();
    let false_predictions: Vec<String> = candidate
        .entities
        .iter()
        .enumerate()
        .filter(|(j, _)| !anchored_candidates.contains(j))
        .map(|(_, e)| describe_entity(e))
        .collect();
    let omissions: Vec<String> = reference
        .entities
        .iter()
        .enumerate()
        .filter(|(i, _)| !anchored_references.contains(i))
        .map(|(_, e)| describe_entity(e))
        .collect();
    debug_assert_eq!(false_predictions.len(), matching.tally(Dimension::Disease).fp);
    debug_assert_eq!(omissions.len(), matching.tally(Dimension::Disease).r#fn);

    let per_dimension_notes = objective
        .per_dimension
        .iter()
        .map(|(dim, score)| {
            format!(
                "{dim}: candidate-side {:.3}, reference-side {:.3}, harmonic {:.3}",
                score.candidate_directed, score.reference_directed, score.harmonic
            )
        })
        .collect();

    Ok(ScoreBreakdown {
        gema: gema_score(objective.value, subjective.value, config.alpha),
        objective: objective.clone(),
        subjective,
        matching,
        explanation: Explanation {
            false_predictions,
            omissions,
            per_dimension_notes,
            subjective_error_log,
        },
    })
}
