//! Corpus, annotation, and score-file I/O.
//!
//! Corpora are JSONL report pairs; annotations are CSV with optional typed
//! error columns; score files are JSONL with floats rounded at six decimals
//! and records sorted by study, so identical inputs always produce
//! byte-identical output.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotationRecord, ReportPair};

pub const CORPUS_FORMAT_VERSION: &str = "corpus-v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate study_id {study_id} at line {line}")]
    DuplicateStudy { study_id: String, line: usize },
    #[error(
        "annotation CSV needs `study_id`, `rater_id`, `significant_errors`, \
         `insignificant_errors` columns, found {found:?}"
    )]
    AnnotationColumns { found: Vec<String> },
    #[error("annotation CSV: {0}")]
    AnnotationCsv(#[from] csv::Error),
    #[error("annotation row {line}, column {column}: {reason}")]
    AnnotationValue {
        line: usize,
        column: String,
        reason: String,
    },
}

/// A corpus line that failed to parse or validate, kept for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

/// Summary facts about a loaded corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: String,
    pub pair_count: usize,
    pub source_path: String,
    pub modality_counts: BTreeMap<String, usize>,
}

/// A loaded corpus plus whatever was rejected along the way.
#[derive(Debug, Clone)]
pub struct CorpusLoad {
    pub pairs: Vec<ReportPair>,
    pub malformed: Vec<MalformedLine>,
    pub manifest: CorpusManifest,
}

/// Loads a JSONL corpus of report pairs.
///
/// In strict mode the first malformed or invalid line aborts the load; in
/// lenient mode such lines are collected with their line numbers and the
/// rest of the corpus survives. A duplicated `study_id` is an error in both
/// modes. Blank lines are ignored.
pub fn load_corpus(path: &Path, strict: bool) -> Result<CorpusLoad, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs: Vec<ReportPair> = Vec::new();
    let mut malformed = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let reason = match serde_json::from_str::<ReportPair>(&line) {
            Ok(pair) => match pair.validate() {
                Ok(()) => {
                    if !seen.insert(pair.study_id.clone()) {
                        return Err(CorpusError::DuplicateStudy {
                            study_id: pair.study_id,
                            line: line_no,
                        });
                    }
                    pairs.push(pair);
                    continue;
                }
                Err(reason) => reason,
            },
            Err(e) => e.to_string(),
        };
        if strict {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                reason,
            });
        }
        malformed.push(MalformedLine {
            line: line_no,
            reason,
        });
    }

    let mut modality_counts: BTreeMap<String, usize> = BTreeMap::new();
    for pair in &pairs {
        *modality_counts.entry(pair.modality.to_string()).or_default() += 1;
    }
    let manifest = CorpusManifest {
        format_version: CORPUS_FORMAT_VERSION.to_string(),
        pair_count: pairs.len(),
        source_path: path.display().to_string(),
        modality_counts,
    };
    Ok(CorpusLoad {
        pairs,
        malformed,
        manifest,
    })
}

const ANNOTATION_REQUIRED: [&str; 4] = [
    "study_id",
    "rater_id",
    "significant_errors",
    "insignificant_errors",
];
const TYPE_COLUMN_PREFIX: &str = "type:";

/// Loads rater annotations from CSV.
///
/// Beyond the four required columns, any column named `type:<label>` is
/// collected into the record's per-type counts under `<label>`; other extra
/// columns are ignored.
pub fn load_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required: Vec<usize> = ANNOTATION_REQUIRED
        .iter()
        .filter_map(|name| position(name))
        .collect();
    if required.len() != ANNOTATION_REQUIRED.len() {
        return Err(CorpusError::AnnotationColumns {
            found: headers.iter().map(str::to_string).collect(),
        });
    }
    let [study_idx, rater_idx, significant_idx, insignificant_idx] = required[..] else {
        unreachable!("length checked above");
    };
    let type_columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(idx, h)| {
            h.trim()
                .strip_prefix(TYPE_COLUMN_PREFIX)
                .map(|label| (idx, label.trim().to_string()))
        })
        .collect();

    let mut records = Vec::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let record = record?;
        // Header is line 1; the first data row is line 2.
        let line = row_idx + 2;
        let count_at = |idx: usize, column: &str| -> Result<u32, CorpusError> {
            let raw = record.get(idx).unwrap_or("").trim();
            raw.parse::<u32>()
                .map_err(|e| CorpusError::AnnotationValue {
                    line,
                    column: column.to_string(),
                    reason: format!("{e} (value {raw:?})"),
                })
        };
        let mut per_type_counts = BTreeMap::new();
        for (idx, label) in &type_columns {
            per_type_counts.insert(label.clone(), count_at(*idx, &format!("type:{label}"))?);
        }
        records.push(AnnotationRecord {
            study_id: record.get(study_idx).unwrap_or("").trim().to_string(),
            rater_id: record.get(rater_idx).unwrap_or("").trim().to_string(),
            significant_errors: count_at(significant_idx, "significant_errors")?,
            insignificant_errors: count_at(insignificant_idx, "insignificant_errors")?,
            per_type_counts,
        });
    }
    Ok(records)
}

/// Writes annotations as CSV in the same layout [`load_annotations`] reads:
/// the four required columns followed by a `type:<label>` column for every
/// label appearing anywhere, in sorted order. Rows are sorted by
/// `(study_id, rater_id)`, so output is byte-deterministic.
pub fn write_annotations<W: Write>(
    writer: W,
    records: &[AnnotationRecord],
) -> Result<(), CorpusError> {
    let labels: std::collections::BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.per_type_counts.keys().map(String::as_str))
        .collect();
    let mut csv_writer = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ANNOTATION_REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(labels.iter().map(|l| format!("{TYPE_COLUMN_PREFIX}{l}")));
    csv_writer.write_record(&header)?;

    let mut ordered: Vec<&AnnotationRecord> = records.iter().collect();
    ordered.sort_by(|a, b| {
        a.study_id
            .cmp(&b.study_id)
            .then_with(|| a.rater_id.cmp(&b.rater_id))
    });
    for record in ordered {
        let mut row = vec![
            record.study_id.clone(),
            record.rater_id.clone(),
            record.significant_errors.to_string(),
            record.insignificant_errors.to_string(),
        ];
        row.extend(labels.iter().map(|label| {
            record
                .per_type_counts
                .get(*label)
                .copied()
                .unwrap_or(0)
                .to_string()
        }));
        csv_writer.write_record(&row)?;
    }
    csv_writer.flush().map_err(|e| CorpusError::Io {
        path: "<annotations>".to_string(),
        source: e,
    })?;
    Ok(())
}

/// One study's scores in the interchange format written by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub study_id: String,
    pub gema: f64,
    pub s_obj: f64,
    pub s_sub: f64,
    pub bleu1: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    /// Harmonic score per clinical dimension, keyed by dimension name.
    pub per_dimension: BTreeMap<String, f64>,
    pub false_predictions: usize,
    pub omissions: usize,
}

fn round6(value: f64) -> f64 {
    (value * 1e6).round() / 1e6
}

impl ScoreRecord {
    /// The record with every float snapped to six decimals, the precision
    /// the writer emits.
    fn quantized(&self) -> ScoreRecord {
        ScoreRecord {
            study_id: self.study_id.clone(),
            gema: round6(self.gema),
            s_obj: round6(self.s_obj),
            s_sub: round6(self.s_sub),
            bleu1: round6(self.bleu1),
            rouge_l: round6(self.rouge_l),
            meteor: round6(self.meteor),
            per_dimension: self
                .per_dimension
                .iter()
                .map(|(k, &v)| (k.clone(), round6(v)))
                .collect(),
            false_predictions: self.false_predictions,
            omissions: self.omissions,
        }
    }
}

/// Writes score records as JSONL, sorted by `study_id`, with floats rounded
/// to six decimals. Output is byte-deterministic: the same records in any
/// order always serialize to the same bytes, and re-writing a loaded file
/// reproduces it exactly.
pub fn write_scores<W: Write>(mut writer: W, records: &[ScoreRecord]) -> std::io::Result<()> {
    let mut ordered: Vec<&ScoreRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.study_id.cmp(&b.study_id));
    for record in ordered {
        serde_json::to_writer(&mut writer, &record.quantized())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a score file produced by [`write_scores`].
pub fn load_scores<R: Read>(reader: R) -> Result<Vec<ScoreRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<scores>".to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}
