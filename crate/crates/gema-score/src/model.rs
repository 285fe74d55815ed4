//! Shared domain types for the evaluation pipeline.
//!
//! Everything here is immutable after construction and safe to share across
//! worker threads without synchronization.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Imaging modality of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Xray,
    Ct,
    Other,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Xray => write!(f, "xray"),
            Modality::Ct => write!(f, "ct"),
            Modality::Other => write!(f, "other"),
        }
    }
}

/// One evaluation unit: a reference report and the candidate generated for it.
///
/// The candidate may be empty (a degenerate generation is still scorable);
/// the reference may not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPair {
    pub study_id: String,
    pub modality: Modality,
    #[serde(rename = "reference")]
    pub reference_text: String,
    #[serde(rename = "candidate")]
    pub candidate_text: String,
}

impl ReportPair {
    /// Checks the structural invariants: non-empty `study_id` and reference.
    pub fn validate(&self) -> Result<(), String> {
        if self.study_id.trim().is_empty() {
            return Err("study_id must be non-empty".into());
        }
        if self.reference_text.trim().is_empty() {
            return Err(format!("study {}: reference text is empty", self.study_id));
        }
        Ok(())
    }
}

/// The four clinical dimensions an extracted finding is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Disease,
    Location,
    Severity,
    Uncertainty,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Disease,
        Dimension::Location,
        Dimension::Severity,
        Dimension::Uncertainty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Disease => "disease",
            Dimension::Location => "location",
            Dimension::Severity => "severity",
            Dimension::Uncertainty => "uncertainty",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Linguistic aspects scored by the expressiveness pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Fluency,
    Grammar,
    Terminology,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Fluency, Aspect::Grammar, Aspect::Terminology];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aspect::Fluency => "fluency",
            Aspect::Grammar => "grammar",
            Aspect::Terminology => "terminology",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single structured finding: disease plus optional descriptors.
///
/// All fields are stored normalized (lowercased, trimmed, inner whitespace
/// collapsed). `raw_span` keeps the original text fragment for explanations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClinicalEntity {
    pub disease: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_span: Option<String>,
}

impl ClinicalEntity {
    /// Builds a normalized entity. Returns `None` if the disease field is
    /// empty after normalization.
    pub fn new(
        disease: &str,
        location: Option<&str>,
        severity: Option<&str>,
        uncertainty: Option<&str>,
    ) -> Option<Self> {
        let disease = normalize(disease);
        if disease.is_empty() {
            return None;
        }
        Some(ClinicalEntity {
            disease,
            location: normalize_opt(location),
            severity: normalize_opt(severity),
            uncertainty: normalize_opt(uncertainty),
            raw_span: None,
        })
    }

    /// Value of the given dimension, or `None` when the entity does not
    /// carry it.
    pub fn dimension(&self, dim: Dimension) -> Option<&str> {
        match dim {
            Dimension::Disease => Some(self.disease.as_str()),
            Dimension::Location => self.location.as_deref(),
            Dimension::Severity => self.severity.as_deref(),
            Dimension::Uncertainty => self.uncertainty.as_deref(),
        }
    }

    /// Key used for duplicate collapsing: all four normalized fields.
    fn dedup_key(&self) -> (String, Option<String>, Option<String>, Option<String>) {
        (
            self.disease.clone(),
            self.location.clone(),
            self.severity.clone(),
            self.uncertainty.clone(),
        )
    }
}

impl fmt::Display for ClinicalEntity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.disease)?;
        if let Some(loc) = &self.location {
            write!(f, " @ {loc}")?;
        }
        if let Some(sev) = &self.severity {
            write!(f, " [{sev}]")?;
        }
        if let Some(unc) = &self.uncertainty {
            write!(f, " ({unc})")?;
        }
        Ok(())
    }
}

/// Which report a set of entities was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityRole {
    Reference,
    Candidate,
}

impl fmt::Display for EntityRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRole::Reference => write!(f, "reference"),
            EntityRole::Candidate => write!(f, "candidate"),
        }
    }
}

/// Validated, deduplicated entities for one report, plus a tally of the
/// extractor output records that failed schema validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub entities: Vec<ClinicalEntity>,
    pub source: EntityRole,
    pub structural_error_count: usize,
}

impl EntitySet {
    pub fn empty(source: EntityRole) -> Self {
        EntitySet {
            entities: Vec::new(),
            source,
            structural_error_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Entities carrying a value for the given dimension.
    pub fn carrying(&self, dim: Dimension) -> impl Iterator<Item = &ClinicalEntity> {
        self.entities.iter().filter(move |e| e.dimension(dim).is_some())
    }
}

/// An extractor output record before validation. Every field is optional;
/// validation decides what survives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEntityRecord {
    #[serde(default)]
    pub disease: Option<String>,
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub severity: Option<String>,
    #[serde(default)]
    pub uncertainty: Option<String>,
    #[serde(default)]
    pub raw_span: Option<String>,
}

/// Validates raw extractor records into an [`EntitySet`].
///
/// Records with an empty or missing disease are rejected; records identical
/// on all four normalized fields are collapsed to the first occurrence. Each
/// rejected or collapsed record adds one structural error, so
/// `entities.len() + structural_error_count == input.len()` always holds.
/// Malformed input is counted, never an error.
pub fn validate_entity_set(raw: Vec<RawEntityRecord>, source: EntityRole) -> EntitySet {
    let input_len = raw.len();
    let mut entities: Vec<ClinicalEntity> = Vec::new();
    let mut seen: std::collections::HashSet<_> = std::collections::HashSet::new();
    let mut structural_errors = 0usize;

    for record in raw {
        let entity = ClinicalEntity::new(
            record.disease.as_deref().unwrap_or(""),
            record.location.as_deref(),
            record.severity.as_deref(),
            record.uncertainty.as_deref(),
        );
        let Some(mut entity) = entity else {
            structural_errors += 1;
            continue;
        };
        if !seen.insert(entity.dedup_key()) {
            structural_errors += 1;
            continue;
        }
        entity.raw_span = record.raw_span.and_then(|s| {
            let s = s.trim().to_string();
            (!s.is_empty()).then_some(s)
        });
        entities.push(entity);
    }

    debug_assert_eq!(entities.len() + structural_errors, input_len);
    EntitySet {
        entities,
        source,
        structural_error_count: structural_errors,
    }
}

/// Human rater error counts for one study, used in correlation analyses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub study_id: String,
    pub rater_id: String,
    pub significant_errors: u32,
    pub insignificant_errors: u32,
    /// Per-error-type counts keyed by label (e.g. `wrong_location`).
    #[serde(default)]
    pub per_type_counts: BTreeMap<String, u32>,
}

/// Lowercase, trim, collapse runs of internal whitespace.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalize_opt(s: Option<&str>) -> Option<String> {
    let n = normalize(s?);
    (!n.is_empty()).then_some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(disease: &str) -> RawEntityRecord {
        RawEntityRecord {
            disease: Some(disease.to_string()),
            ..Default::default()
        }
    }

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  Left   Lower\tLobe "), "left lower lobe");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("   "), "");
    }

    #[test]
    fn validate_empty_input() {
        let set = validate_entity_set(vec![], EntityRole::Reference);
        assert!(set.entities.is_empty());
        assert_eq!(set.structural_error_count, 0);
    }

    #[test]
    fn validate_single_valid_record() {
        let set = validate_entity_set(
            vec![RawEntityRecord {
                disease: Some("pleural effusion".into()),
                location: Some("left".into()),
                ..Default::default()
            }],
            EntityRole::Candidate,
        );
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.structural_error_count, 0);
        assert_eq!(set.entities[0].disease, "pleural effusion");
        assert_eq!(set.entities[0].location.as_deref(), Some("left"));
    }

    #[test]
    fn validate_rejects_empty_disease_and_collapses_duplicates() {
        // One empty-disease rejection, one duplicate collapse.
        let set = validate_entity_set(
            vec![raw(""), raw("atelectasis"), raw("atelectasis")],
            EntityRole::Candidate,
        );
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.entities[0].disease, "atelectasis");
        assert_eq!(set.structural_error_count, 2);
    }

    #[test]
    fn validate_case_insensitive_duplicates() {
        let set = validate_entity_set(
            vec![raw("Atelectasis"), raw("ATELECTASIS  ")],
            EntityRole::Reference,
        );
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.structural_error_count, 1);
    }

    #[test]
    fn validate_empty_optional_field_is_dropped_not_counted() {
        let set = validate_entity_set(
            vec![RawEntityRecord {
                disease: Some("edema".into()),
                severity: Some("   ".into()),
                ..Default::default()
            }],
            EntityRole::Reference,
        );
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.structural_error_count, 0);
        assert!(set.entities[0].severity.is_none());
    }

    #[test]
    fn validate_is_idempotent() {
        let first = validate_entity_set(
            vec![raw("edema"), raw(""), raw("edema"), raw("nodule")],
            EntityRole::Candidate,
        );
        let again = validate_entity_set(
            first
                .entities
                .iter()
                .map(|e| RawEntityRecord {
                    disease: Some(e.disease.clone()),
                    location: e.location.clone(),
                    severity: e.severity.clone(),
                    uncertainty: e.uncertainty.clone(),
                    raw_span: e.raw_span.clone(),
                })
                .collect(),
            EntityRole::Candidate,
        );
        assert_eq!(again.entities, first.entities);
        assert_eq!(again.structural_error_count, 0);
    }

    #[test]
    fn report_pair_invariants() {
        let pair = ReportPair {
            study_id: "s1".into(),
            modality: Modality::Xray,
            reference_text: "The lungs are clear.".into(),
            candidate_text: String::new(),
        };
        // Empty candidate is legal.
        assert!(pair.validate().is_ok());

        let bad = ReportPair {
            study_id: String::new(),
            ..pair.clone()
        };
        assert!(bad.validate().is_err());

        let bad = ReportPair {
            reference_text: "  ".into(),
            ..pair
        };
        assert!(bad.validate().is_err());
    }
}
