//! The entity extraction agent: prompt construction, tolerant parsing of
//! structured LLM responses into validated entity sets, and the offline
//! fixture store for pre-structured extractions.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{DecodingConfig, GatewayError, LlmGateway, PromptRequest};
use crate::model::{EntityRole, EntitySet, RawEntityRecord, validate_entity_set};

/// Placeholder substituted with the report text when rendering prompts.
pub const REPORT_SLOT: &str = "{report}";

const EXCERPT_LEN: usize = 200;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("no JSON entity payload found in response; starts: {excerpt:?}")]
    NoJsonPayload { excerpt: String },
    #[error("entity payload is not valid JSON ({reason}); starts: {excerpt:?}")]
    InvalidJson { reason: String, excerpt: String },
    #[error("prompt template {template_id} lacks the {REPORT_SLOT} slot")]
    MissingReportSlot { template_id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("failed to read fixtures at {path}: {source}")]
    FixtureIo {
        path: String,
        source: std::io::Error,
    },
    #[error("fixture line {line} is malformed: {reason}")]
    MalformedFixtureLine { line: usize, reason: String },
    #[error("duplicate fixture for study {study_id} role {role}")]
    DuplicateFixture { study_id: String, role: EntityRole },
    #[error("no fixture for study {study_id} role {role}")]
    FixtureMissing { study_id: String, role: EntityRole },
}

fn excerpt(text: &str) -> String {
    text.chars().take(EXCERPT_LEN).collect()
}

/// A versioned prompt pair with a single report slot in the user skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionPromptTemplate {
    pub template_id: String,
    pub system_prompt: String,
    pub user_prompt_skeleton: String,
    pub expected_schema_version: String,
}

impl ExtractionPromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt_skeleton: impl Into<String>,
        expected_schema_version: impl Into<String>,
    ) -> Result<Self, ExtractionError> {
        let template = ExtractionPromptTemplate {
            template_id: template_id.into(),
            system_prompt: system_prompt.into(),
            user_prompt_skeleton: user_prompt_skeleton.into(),
            expected_schema_version: expected_schema_version.into(),
        };
        if !template.user_prompt_skeleton.contains(REPORT_SLOT) {
            return Err(ExtractionError::MissingReportSlot {
                template_id: template.template_id,
            });
        }
        Ok(template)
    }

    /// The template shipped with this crate.
    pub fn builtin_v1() -> Self {
        Self::new(
            "extraction-v1",
            include_str!("../assets/prompts/extraction_system_v1.txt").trim_end(),
            include_str!("../assets/prompts/extraction_user_v1.txt").trim_end(),
            "entity-v1",
        )
        .expect("builtin template carries the report slot")
    }
}

/// Renders the template over a report with the deterministic decoding
/// profile. The report text is inserted verbatim; empty reports are legal.
pub fn build_extraction_prompt(
    report_text: &str,
    template: &ExtractionPromptTemplate,
) -> PromptRequest {
    let user_prompt = template.user_prompt_skeleton.replace(REPORT_SLOT, report_text);
    PromptRequest::new(
        template.system_prompt.clone(),
        user_prompt,
        DecodingConfig::default(),
    )
    .expect("rendered user prompt is never empty")
}

/// Strips leading/trailing markdown fences, if present.
fn strip_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop the info string (e.g. "json") up to the first newline.
    let rest = match rest.find('\n') {
        Some(idx) => &rest[idx + 1..],
        None => rest,
    };
    rest.strip_suffix("```").map_or(rest, str::trim).trim()
}

/// Collects every balanced top-level bracketed region opened by
/// `open`/closed by `close`, skipping over JSON string literals inside
/// regions so brackets in string values never break the balance.
fn balanced_regions(text: &str, open: char, close: char) -> Vec<&str> {
    let mut regions = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (idx, c) in text.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            c if c == open => {
                if depth == 0 {
                    start = idx;
                }
                depth += 1;
            }
            c if c == close && depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    regions.push(&text[start..=idx]);
                }
            }
            _ => {}
        }
    }
    regions
}

/// Pulls the first plausible JSON array out of possibly fenced, possibly
/// prose-wrapped text and parses it. Used for both entity payloads and
/// issue lists.
///
/// Prose around the payload can itself contain brackets (footnote markers,
/// ranges), so regions that do not parse, or parse to arrays without a
/// single object element, are skipped in favor of later candidates. A
/// parseable-but-objectless array is still accepted when nothing better
/// exists, so malformed records surface as structural errors downstream.
pub(crate) fn extract_json_array(text: &str) -> Result<Vec<Value>, ExtractionError> {
    let body = strip_fences(text);
    let mut first_parsed: Option<Vec<Value>> = None;
    let mut first_failure: Option<String> = None;

    for region in balanced_regions(body, '[', ']') {
        match serde_json::from_str::<Value>(region) {
            Ok(Value::Array(items)) => {
                if items.is_empty() || items.iter().any(Value::is_object) {
                    return Ok(items);
                }
                first_parsed.get_or_insert(items);
            }
            Ok(_) => {}
            Err(e) => {
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if let Some(items) = first_parsed {
        return Ok(items);
    }

    // Fall back to an object with an "entities" array, a shape some models
    // insist on despite instructions. This also rescues payloads whose
    // sibling fields confuse the array scanner with brackets outside the
    // entities list.
    for region in balanced_regions(body, '{', '}') {
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(region) {
            if let Some(Value::Array(items)) = map.get("entities") {
                return Ok(items.clone());
            }
        }
    }

    if let Some(reason) = first_failure {
        return Err(ExtractionError::InvalidJson {
            reason,
            excerpt: excerpt(text),
        });
    }
    Err(ExtractionError::NoJsonPayload {
        excerpt: excerpt(text),
    })
}

fn record_from_value(value: &Value) -> RawEntityRecord {
    let get = |key: &str| {
        value
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
    };
    RawEntityRecord {
        disease: get("disease"),
        location: get("location"),
        severity: get("severity"),
        uncertainty: get("uncertainty"),
        raw_span: get("raw_span"),
    }
}

/// Parses a raw LLM completion into a validated [`EntitySet`] for `role`.
///
/// Tolerates markdown fences and surrounding prose. Records that parse as
/// JSON but violate the field schema become structural errors via
/// validation; a response with no JSON payload at all is an error carrying
/// the first 200 characters.
pub fn parse_extraction_response(
    completion_text: &str,
    role: EntityRole,
) -> Result<EntitySet, ExtractionError> {
    let items = extract_json_array(completion_text)?;
    let raw: Vec<RawEntityRecord> = items.iter().map(record_from_value).collect();
    Ok(validate_entity_set(raw, role))
}

/// Full extraction for one report: render prompt, complete, parse.
pub fn extract_entities(
    report_text: &str,
    template: &ExtractionPromptTemplate,
    gateway: &LlmGateway,
    role: EntityRole,
) -> Result<EntitySet, ExtractionError> {
    let request = build_extraction_prompt(report_text, template);
    let completion = gateway.complete(&request)?;
    parse_extraction_response(&completion.text, role)
}

/// One line of the offline fixture interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub study_id: String,
    pub role: EntityRole,
    pub entities: Vec<RawEntityRecord>,
}

/// Pre-structured extractions keyed by study and role, read from JSONL.
#[derive(Debug, Default)]
pub struct FixtureStore {
    sets: HashMap<(String, EntityRole), EntitySet>,
}

impl FixtureStore {
    /// Loads a fixture file, validating every entity list. Duplicate
    /// (study, role) pairs are rejected.
    pub fn load(path: &Path) -> Result<Self, ExtractionError> {
        let file = std::fs::File::open(path).map_err(|source| ExtractionError::FixtureIo {
            path: path.display().to_string(),
            source,
        })?;
        let mut store = FixtureStore::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| ExtractionError::FixtureIo {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(&line).map_err(|e| ExtractionError::MalformedFixtureLine {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            let key = (parsed.study_id.clone(), parsed.role);
            let set = validate_entity_set(parsed.entities, parsed.role);
            if store.sets.insert(key, set).is_some() {
                return Err(ExtractionError::DuplicateFixture {
                    study_id: parsed.study_id,
                    role: parsed.role,
                });
            }
        }
        Ok(store)
    }

    pub fn get(&self, study_id: &str, role: EntityRole) -> Option<&EntitySet> {
        self.sets.get(&(study_id.to_string(), role))
    }

    pub fn require(&self, study_id: &str, role: EntityRole) -> Result<&EntitySet, ExtractionError> {
        self.get(study_id, role)
            .ok_or_else(|| ExtractionError::FixtureMissing {
                study_id: study_id.to_string(),
                role,
            })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Serializes entity sets into the fixture format, sorted by (study, role)
/// for byte-deterministic output.
pub fn write_fixtures<W: Write>(
    mut writer: W,
    sets: &[(String, EntityRole, &EntitySet)],
) -> std::io::Result<()> {
    let mut ordered: Vec<&(String, EntityRole, &EntitySet)> = sets.iter().collect();
    ordered.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let rank = |r: EntityRole| matches!(r, EntityRole::Candidate) as u8;
            rank(a.1).cmp(&rank(b.1))
        })
    });
    for (study_id, role, set) in ordered {
        let line = FixtureLine {
            study_id: study_id.clone(),
            role: *role,
            entities: set
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
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockFixture, RetryPolicy};
    use crate::model::ClinicalEntity;
    use std::sync::Arc;

    #[test]
    fn builtin_template_renders_report_verbatim() {
        let template = ExtractionPromptTemplate::builtin_v1();
        let request = build_extraction_prompt("No acute findings.", &template);
        assert!(request.user_prompt.contains("No acute findings."));
        assert!(request.user_prompt.contains("\"disease\""));
        assert!(request.user_prompt.contains("\"uncertainty\""));
        assert_eq!(request.decoding, DecodingConfig::default());
    }

    #[test]
    fn empty_report_is_a_valid_prompt() {
        let template = ExtractionPromptTemplate::builtin_v1();
        let request = build_extraction_prompt("", &template);
        assert!(!request.user_prompt.is_empty());
        assert!(!request.user_prompt.contains(REPORT_SLOT));
    }

    #[test]
    fn json_breaking_characters_survive_rendering() {
        let template = ExtractionPromptTemplate::builtin_v1();
        let tricky = r#"Report "quoted" with {braces} and [brackets] \ and line
breaks."#;
        let request = build_extraction_prompt(tricky, &template);
        assert!(request.user_prompt.contains(tricky));
    }

    #[test]
    fn template_without_slot_is_rejected() {
        assert!(matches!(
            ExtractionPromptTemplate::new("bad", "sys", "no slot here", "v"),
            Err(ExtractionError::MissingReportSlot { .. })
        ));
    }

    #[test]
    fn parse_full_four_field_entity() {
        let text = r#"[{"disease":"atelectasis","location":"left lower lobe","severity":"mild","uncertainty":"probable"}]"#;
        let set = parse_extraction_response(text, EntityRole::Reference).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.structural_error_count, 0);
        let e = &set.entities[0];
        assert_eq!(e.disease, "atelectasis");
        assert_eq!(e.location.as_deref(), Some("left lower lobe"));
        assert_eq!(e.severity.as_deref(), Some("mild"));
        assert_eq!(e.uncertainty.as_deref(), Some("probable"));
    }

    #[test]
    fn parse_fenced_empty_list() {
        let set = parse_extraction_response("```json\n[]\n```", EntityRole::Candidate).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.structural_error_count, 0);
    }

    #[test]
    fn parse_prose_wrapped_with_invalid_record() {
        let text = r#"Here are the findings: [{"disease":"pleural effusion"},{"disease":""}]"#;
        let set = parse_extraction_response(text, EntityRole::Candidate).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entities[0].disease, "pleural effusion");
        assert_eq!(set.structural_error_count, 1);
    }

    #[test]
    fn parse_tolerates_brackets_inside_strings() {
        let text = r#"Note [1]: [{"disease":"nodule [solid]","location":"right"}] done"#;
        let set = parse_extraction_response(text, EntityRole::Reference).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entities[0].disease, "nodule [solid]");
    }

    #[test]
    fn parse_skips_unparseable_bracket_prose() {
        let text = r#"Findings [see below]: [{"disease":"edema"}]"#;
        let set = parse_extraction_response(text, EntityRole::Candidate).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entities[0].disease, "edema");
    }

    #[test]
    fn purely_malformed_array_reports_invalid_json() {
        match parse_extraction_response(r#"[{"disease": edema}]"#, EntityRole::Reference) {
            Err(ExtractionError::InvalidJson { .. }) => {}
            other => panic!("expected InvalidJson, got {other:?}"),
        }
    }

    #[test]
    fn parse_object_with_entities_key() {
        let text = r#"{"entities":[{"disease":"edema"}]}"#;
        let set = parse_extraction_response(text, EntityRole::Reference).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entities[0].disease, "edema");
    }

    #[test]
    fn parse_non_string_fields_become_structural_errors() {
        let text = r#"[{"disease": 42}, {"disease": "edema", "severity": 2}]"#;
        let set = parse_extraction_response(text, EntityRole::Candidate).unwrap();
        // First record has no usable disease; the second drops its numeric
        // severity but keeps the finding.
        assert_eq!(set.len(), 1);
        assert_eq!(set.structural_error_count, 1);
        assert!(set.entities[0].severity.is_none());
    }

    #[test]
    fn parse_failure_carries_excerpt() {
        let long_garbage = format!("The model refused. {}", "x".repeat(500));
        match parse_extraction_response(&long_garbage, EntityRole::Reference) {
            Err(ExtractionError::NoJsonPayload { excerpt }) => {
                assert_eq!(excerpt.chars().count(), 200);
                assert!(excerpt.starts_with("The model refused."));
            }
            other => panic!("expected NoJsonPayload, got {other:?}"),
        }
    }

    #[test]
    fn parse_unbalanced_array_is_an_error() {
        assert!(matches!(
            parse_extraction_response(r#"[{"disease":"edema""#, EntityRole::Reference),
            Err(ExtractionError::NoJsonPayload { .. })
        ));
    }

    #[test]
    fn serialization_round_trip_preserves_entity_sets() {
        let entities = vec![
            ClinicalEntity::new("atelectasis", Some("left base"), Some("mild"), None).unwrap(),
            ClinicalEntity::new("pleural effusion", None, None, Some("possible")).unwrap(),
        ];
        let set = EntitySet {
            entities,
            source: EntityRole::Reference,
            structural_error_count: 0,
        };
        let json = serde_json::to_string(&set.entities).unwrap();
        let back = parse_extraction_response(&json, EntityRole::Reference).unwrap();
        assert_eq!(back.entities, set.entities);
        assert_eq!(back.structural_error_count, 0);
    }

    #[test]
    fn extract_entities_through_mock_gateway() {
        let dir = tempfile::tempdir().unwrap();
        let template = ExtractionPromptTemplate::builtin_v1();
        let report = "Mild atelectasis in the left base. Possible small effusion.";
        let request = build_extraction_prompt(report, &template);
        MockBackend::install_fixture(
            dir.path(),
            &request,
            &MockFixture::new(
                r#"[{"disease":"atelectasis","location":"left base","severity":"mild"},
                    {"disease":"effusion","severity":"small","uncertainty":"possible"}]"#,
            ),
        )
        .unwrap();

        let gateway = LlmGateway::new(Arc::new(MockBackend::new(dir.path()).unwrap()))
            .with_retry(RetryPolicy::immediate(1));
        let set = extract_entities(report, &template, &gateway, EntityRole::Candidate).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.source, EntityRole::Candidate);
    }

    #[test]
    fn extract_entities_propagates_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let template = ExtractionPromptTemplate::builtin_v1();
        let request = build_extraction_prompt("some report", &template);
        MockBackend::install_fixture(dir.path(), &request, &MockFixture::new("I cannot do that"))
            .unwrap();
        let gateway = LlmGateway::new(Arc::new(MockBackend::new(dir.path()).unwrap()));
        assert!(matches!(
            extract_entities("some report", &template, &gateway, EntityRole::Reference),
            Err(ExtractionError::NoJsonPayload { .. })
        ));
    }

    #[test]
    fn fixture_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let ref_set = validate_entity_set(
            vec![RawEntityRecord {
                disease: Some("edema".into()),
                ..Default::default()
            }],
            EntityRole::Reference,
        );
        let cand_set = validate_entity_set(vec![], EntityRole::Candidate);
        {
            let file = std::fs::File::create(&path).unwrap();
            write_fixtures(
                file,
                &[
                    ("s1".to_string(), EntityRole::Reference, &ref_set),
                    ("s1".to_string(), EntityRole::Candidate, &cand_set),
                ],
            )
            .unwrap();
        }
        let store = FixtureStore::load(&path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(
            store.get("s1", EntityRole::Reference).unwrap().entities,
            ref_set.entities
        );
        assert!(store.get("s1", EntityRole::Candidate).unwrap().is_empty());
        assert!(store.get("s2", EntityRole::Reference).is_none());
        assert!(matches!(
            store.require("s2", EntityRole::Reference),
            Err(ExtractionError::FixtureMissing { .. })
        ));
    }

    #[test]
    fn fixture_store_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"study_id":"s1","role":"reference","entities":[]}"#,
                "\n",
                r#"{"study_id":"s1","role":"reference","entities":[]}"#,
                "\n"
            ),
        )
        .unwrap();
        assert!(matches!(
            FixtureStore::load(&path),
            Err(ExtractionError::DuplicateFixture { .. })
        ));
    }

    #[test]
    fn fixture_store_reports_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(&path, "{\"study_id\":\"s1\",\"role\":\"reference\",\"entities\":[]}\nnot json\n").unwrap();
        match FixtureStore::load(&path) {
            Err(ExtractionError::MalformedFixtureLine { line: 2, .. }) => {}
            other => panic!("expected line-2 error, got {other:?}"),
        }
    }

    #[test]
    fn write_fixtures_is_deterministically_ordered() {
        let set = validate_entity_set(vec![], EntityRole::Reference);
        let cand = validate_entity_set(vec![], EntityRole::Candidate);
        let mut forward = Vec::new();
        write_fixtures(
            &mut forward,
            &[
                ("b".to_string(), EntityRole::Candidate, &cand),
                ("a".to_string(), EntityRole::Reference, &set),
                ("b".to_string(), EntityRole::Reference, &set),
            ],
        )
        .unwrap();
        let mut reversed = Vec::new();
        write_fixtures(
            &mut reversed,
            &[
                ("b".to_string(), EntityRole::Reference, &set),
                ("b".to_string(), EntityRole::Candidate, &cand),
                ("a".to_string(), EntityRole::Reference, &set),
            ],
        )
        .unwrap();
        assert_eq!(forward, reversed);
        let text = String::from_utf8(forward).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("\"a\""));
        assert!(lines[1].contains("reference"));
        assert!(lines[2].contains("candidate"));
    }
}
