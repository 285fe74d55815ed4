//! Seeded synthetic corpus generation for calibration and benchmarking.
//!
//! Each study gets a structured reference, a candidate derived from it by
//! injecting a known number of significant errors, and prose renderings of
//! both. Surface noise — synonym substitution and sentence-template
//! variation — is layered on top so token-overlap metrics diverge from the
//! injected error count while entity-level scoring tracks it.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matching::Lexicon;
use crate::model::{
    AnnotationRecord, ClinicalEntity, EntityRole, EntitySet, Modality, ReportPair,
};

/// Knobs for the generator. Defaults produce the calibration corpus used
/// by the benchmark suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub study_count: usize,
    pub entities_per_study: usize,
    /// Injected significant errors per study are drawn uniformly from
    /// `0..=max_errors`.
    pub max_errors: usize,
    pub seed: u64,
    /// Probability that a candidate disease mention is realized through a
    /// lexicon synonym instead of its canonical term.
    pub synonym_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            study_count: 50,
            entities_per_study: 5,
            max_errors: 8,
            seed: 20250823,
            synonym_probability: 0.4,
        }
    }
}

/// The kinds of significant error the generator can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ErrorKind {
    Omission,
    FalseFinding,
    LocationSwap,
    SeveritySwap,
}

impl ErrorKind {
    const CYCLE: [ErrorKind; 4] = [
        ErrorKind::Omission,
        ErrorKind::FalseFinding,
        ErrorKind::LocationSwap,
        ErrorKind::SeveritySwap,
    ];

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Omission => "omission",
            ErrorKind::FalseFinding => "false_finding",
            ErrorKind::LocationSwap => "location_swap",
            ErrorKind::SeveritySwap => "severity_swap",
        }
    }
}

/// One generated study: the report pair, both entity sets, and the exact
/// errors injected into the candidate.
#[derive(Debug, Clone)]
pub struct SynthStudy {
    pub pair: ReportPair,
    pub reference_entities: EntitySet,
    pub candidate_entities: EntitySet,
    pub significant_errors: u32,
    pub per_type_counts: BTreeMap<String, u32>,
}

/// A full generated corpus.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub studies: Vec<SynthStudy>,
}

impl SynthCorpus {
    pub fn pairs(&self) -> Vec<ReportPair> {
        self.studies.iter().map(|s| s.pair.clone()).collect()
    }

    /// One annotation row per study from a single synthetic rater whose
    /// counts are the injected ground truth.
    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.studies
            .iter()
            .map(|s| AnnotationRecord {
                study_id: s.pair.study_id.clone(),
                rater_id: "synthetic".to_string(),
                significant_errors: s.significant_errors,
                insignificant_errors: 0,
                per_type_counts: s.per_type_counts.clone(),
            })
            .collect()
    }
}

const DISEASES: &[&str] = &[
    "pleural effusion",
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "pneumothorax",
    "opacity",
    "pulmonary edema",
    "nodule",
    "emphysema",
    "fibrosis",
    "lymphadenopathy",
    "hiatal hernia",
];

/// Findings only ever introduced as false predictions; disjoint from the
/// reference pool so an injected finding can never accidentally match.
const DISTRACTORS: &[&str] = &[
    "rib fracture",
    "scoliosis",
    "granuloma",
    "hydropneumothorax",
    "osteopenia",
    "splenomegaly",
    "hematoma",
    "thyroid enlargement",
    "clavicle deformity",
    "tortuous aorta",
];

const LOCATIONS: &[&str] = &[
    "left lower lobe",
    "right lower lobe",
    "left upper lobe",
    "right upper lobe",
    "right middle lobe",
    "left base",
    "right base",
    "bilateral lung fields",
    "perihilar region",
    "left apex",
    "right apex",
    "costophrenic angle",
];

const SEVERITIES: &[&str] = &["mild", "moderate", "severe", "trace", "small", "large"];

const UNCERTAINTIES: &[&str] = &["definite", "probable", "possible", "unlikely"];

/// Sentence skeletons. Every variant contains a verb from the clause list
/// so rendered reports stay quiet under the rule-based audit.
const TEMPLATES: &[&str] = &[
    "{u} {s} {d} is seen in the {l}.",
    "The {l} shows {s} {d}, {u}.",
    "There is {u} {s} {d} involving the {l}.",
    "{s} {d} is noted in the {l} and remains {u}.",
];

struct StudyDraft {
    entity: ClinicalEntity,
    original: bool,
    location_swapped: bool,
    severity_swapped: bool,
}

/// Generates a corpus deterministically from the config's seed.
pub fn generate_corpus(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lexicon = Lexicon::builtin();
    let studies = (0..config.study_count)
        .map(|index| generate_study(index, config, &lexicon, &mut rng))
        .collect();
    SynthCorpus { studies }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn generate_study(
    index: usize,
    config: &SynthConfig,
    lexicon: &Lexicon,
    rng: &mut ChaCha8Rng,
) -> SynthStudy {
    let entity_count = config.entities_per_study.min(DISEASES.len());
    let mut disease_pool: Vec<&str> = DISEASES.to_vec();
    disease_pool.shuffle(rng);

    let reference: Vec<ClinicalEntity> = disease_pool[..entity_count]
        .iter()
        .map(|disease| {
            ClinicalEntity::new(
                disease,
                Some(pick(rng, LOCATIONS)),
                Some(pick(rng, SEVERITIES)),
                Some(pick(rng, UNCERTAINTIES)),
            )
            .expect("pool diseases are non-empty")
        })
        .collect();

    let mut drafts: Vec<StudyDraft> = reference
        .iter()
        .map(|entity| StudyDraft {
            entity: entity.clone(),
            original: true,
            location_swapped: false,
            severity_swapped: false,
        })
        .collect();

    let error_budget = rng.gen_range(0..=config.max_errors);
    let mut distractor_pool: Vec<&str> = DISTRACTORS.to_vec();
    distractor_pool.shuffle(rng);
    let mut per_type_counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut injected = 0u32;

    for slot in 0..error_budget {
        // Walking a fixed cycle keeps the error-type mix, and therefore the
        // damage profile, comparable across studies with equal budgets.
        let applied = (0..ErrorKind::CYCLE.len()).find_map(|offset| {
            let kind = ErrorKind::CYCLE[(slot + offset) % ErrorKind::CYCLE.len()];
            apply_error(kind, &mut drafts, &mut distractor_pool, entity_count, rng)
                .then_some(kind)
        });
        if let Some(kind) = applied {
            *per_type_counts.entry(kind.label().to_string()).or_default() += 1;
            injected += 1;
        }
    }

    let candidate: Vec<ClinicalEntity> = drafts.iter().map(|d| d.entity.clone()).collect();

    let study_id = format!("synth-{index:03}");
    let modality = if index.is_multiple_of(3) { Modality::Ct } else { Modality::Xray };
    let reference_text = render_report(&reference, None, 0.0, rng);
    let candidate_text = render_report(&candidate, Some(lexicon), config.synonym_probability, rng);

    SynthStudy {
        pair: ReportPair {
            study_id,
            modality,
            reference_text,
            candidate_text,
        },
        reference_entities: EntitySet {
            entities: reference,
            source: EntityRole::Reference,
            structural_error_count: 0,
        },
        candidate_entities: EntitySet {
            entities: candidate,
            source: EntityRole::Candidate,
            structural_error_count: 0,
        },
        significant_errors: injected,
        per_type_counts,
    }
}

fn apply_error(
    kind: ErrorKind,
    drafts: &mut Vec<StudyDraft>,
    distractor_pool: &mut Vec<&str>,
    entity_count: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    match kind {
        ErrorKind::Omission => {
            // Keep at least two original findings so a candidate is never
            // reduced to pure hallucination by omissions alone.
            let originals: Vec<usize> = drafts
                .iter()
                .enumerate()
                .filter(|(_, d)| d.original)
                .map(|(i, _)| i)
                .collect();
            let max_omissions = entity_count.saturating_sub(2);
            if entity_count - originals.len() >= max_omissions || originals.is_empty() {
                return false;
            }
            let victim = originals[rng.gen_range(0..originals.len())];
            drafts.remove(victim);
            true
        }
        ErrorKind::FalseFinding => {
            let Some(disease) = distractor_pool.pop() else {
                return false;
            };
            drafts.push(StudyDraft {
                entity: ClinicalEntity::new(
                    disease,
                    Some(pick(rng, LOCATIONS)),
                    Some(pick(rng, SEVERITIES)),
                    Some(pick(rng, UNCERTAINTIES)),
                )
                .expect("distractors are non-empty"),
                original: false,
                location_swapped: false,
                severity_swapped: false,
            });
            true
        }
        ErrorKind::LocationSwap => swap_descriptor(drafts, rng, LOCATIONS, |d| {
            (!d.location_swapped).then_some(&mut d.entity.location)
        })
        .inspect(|&i| drafts[i].location_swapped = true)
        .is_some(),
        ErrorKind::SeveritySwap => swap_descriptor(drafts, rng, SEVERITIES, |d| {
            (!d.severity_swapped).then_some(&mut d.entity.severity)
        })
        .inspect(|&i| drafts[i].severity_swapped = true)
        .is_some(),
    }
}

/// Replaces one original entity's descriptor with a different pool value.
/// Returns the index changed, or `None` when no entity is eligible.
fn swap_descriptor(
    drafts: &mut [StudyDraft],
    rng: &mut ChaCha8Rng,
    pool: &[&str],
    field: impl Fn(&mut StudyDraft) -> Option<&mut Option<String>>,
) -> Option<usize> {
    let eligible: Vec<usize> = drafts
        .iter_mut()
        .enumerate()
        .filter(|(_, d)| d.original)
        .filter_map(|(i, d)| field(d).map(|_| i))
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let index = eligible[rng.gen_range(0..eligible.len())];
    let slot = field(&mut drafts[index]).expect("eligibility just checked");
    let current = slot.clone().unwrap_or_default();
    let replacement = loop {
        let value = pick(rng, pool);
        if value != current {
            break value;
        }
    };
    *slot = Some(replacement.to_string());
    Some(index)
}

/// Renders entities into prose, one sentence per finding. When a lexicon is
/// given, each disease mention is independently replaced by a random
/// synonym with the configured probability.
fn render_report(
    entities: &[ClinicalEntity],
    lexicon: Option<&Lexicon>,
    synonym_probability: f64,
    rng: &mut ChaCha8Rng,
) -> String {
    if entities.is_empty() {
        return "The examination is unremarkable.".to_string();
    }
    let sentences: Vec<String> = entities
        .iter()
        .map(|entity| {
            let mut disease = entity.disease.clone();
            if let Some(lexicon) = lexicon {
                let synonyms: Vec<&str> = lexicon.synonyms_of(&entity.disease).collect();
                if !synonyms.is_empty() && rng.gen_bool(synonym_probability) {
                    disease = synonyms[rng.gen_range(0..synonyms.len())].to_string();
                }
            }
            let template = pick(rng, TEMPLATES);
            let sentence = template
                .replace("{d}", &disease)
                .replace("{l}", entity.location.as_deref().unwrap_or("lung"))
                .replace("{s}", entity.severity.as_deref().unwrap_or("mild"))
                .replace("{u}", entity.uncertainty.as_deref().unwrap_or("definite"));
            let mut chars = sentence.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => sentence,
            }
        })
        .collect();
    sentences.join(" ")
}
