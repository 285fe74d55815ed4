//! Entity comparison and one-to-one set matching, producing per-dimension
//! true/false positive ledgers.
//!
//! Matching is greedy and anchored: diseases pair up first in stable input
//! order (first eligible candidate wins), then the dependent dimensions —
//! location, severity, uncertainty — are judged only on anchored pairs.
//! Greedy assignment is deterministic, cheap to explain in the output
//! ledger, and optimal whenever comparators are exact equivalences; the
//! test suite bounds it against a brute-force optimal matcher.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClinicalEntity, Dimension, EntitySet, normalize};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed lexicon CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("lexicon CSV needs `canonical` and `synonym` columns, found {found:?}")]
    MissingColumns { found: Vec<String> },
}

/// Symmetric synonym table: term → set of terms it may substitute for.
///
/// Loading closes each listed pair symmetrically (a↔b implies b↔a) but does
/// not chain pairs transitively; multi-way synonym groups must list every
/// pair explicitly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    groups: HashMap<String, BTreeSet<String>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The synonym table shipped with this crate: common chest-imaging
    /// findings, lobe abbreviations, and severity/uncertainty aliases.
    pub fn builtin() -> Self {
        Self::from_csv_reader(
            include_str!("../assets/lexicon/default_lexicon.csv").as_bytes(),
        )
        .expect("builtin lexicon is well-formed")
    }

    /// Builds a lexicon from (canonical, synonym) pairs, normalizing terms
    /// and closing symmetrically.
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut lexicon = Lexicon::default();
        for (a, b) in pairs {
            let a = normalize(a.as_ref());
            let b = normalize(b.as_ref());
            if a.is_empty() || b.is_empty() || a == b {
                continue;
            }
            lexicon.groups.entry(a.clone()).or_default().insert(b.clone());
            lexicon.groups.entry(b).or_default().insert(a);
        }
        lexicon
    }

    /// Loads the CSV interchange format: a header with `canonical,synonym`
    /// columns, one pair per row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, LexiconError> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let canonical_idx = headers.iter().position(|h| h.trim() == "canonical");
        let synonym_idx = headers.iter().position(|h| h.trim() == "synonym");
        let (Some(ci), Some(si)) = (canonical_idx, synonym_idx) else {
            return Err(LexiconError::MissingColumns {
                found: headers.iter().map(str::to_string).collect(),
            });
        };
        let mut pairs = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            let canonical = record.get(ci).unwrap_or("").to_string();
            let synonym = record.get(si).unwrap_or("").to_string();
            pairs.push((canonical, synonym));
        }
        Ok(Self::from_pairs(pairs))
    }

    /// True when the two normalized terms are identical or listed as a
    /// synonym pair.
    pub fn equivalent(&self, a: &str, b: &str) -> bool {
        if a == b {
            return true;
        }
        self.groups.get(a).is_some_and(|set| set.contains(b))
    }

    /// Synonyms registered for a term, in sorted order.
    pub fn synonyms_of(&self, term: &str) -> impl Iterator<Item = &str> {
        self.groups
            .get(term)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    /// Number of terms that have at least one synonym.
    pub fn term_count(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// How one dimension's values are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// Equal after normalization.
    Exact,
    /// Equal or listed as lexicon synonyms.
    Lexicon,
    /// Lexicon, then a normalized edit-distance similarity threshold.
    LexiconThenSimilarity,
}

/// Comparison configuration: the synonym table, the per-dimension modes, and
/// the string-similarity threshold (1.0 = exact only).
#[derive(Debug, Clone)]
pub struct MatchPolicy {
    pub lexicon: Lexicon,
    pub string_similarity_threshold: f64,
    pub dimension_rules: BTreeMap<Dimension, ComparisonMode>,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self::new(Lexicon::empty())
    }
}

impl MatchPolicy {
    /// Lexicon comparison on every dimension; severity and uncertainty then
    /// match only within their exact (lexicon-canonical) category.
    pub fn new(lexicon: Lexicon) -> Self {
        MatchPolicy {
            lexicon,
            string_similarity_threshold: 1.0,
            dimension_rules: Dimension::ALL
                .iter()
                .map(|&d| (d, ComparisonMode::Lexicon))
                .collect(),
        }
    }

    /// Strict equality everywhere; useful as an oracle-friendly baseline.
    pub fn exact() -> Self {
        MatchPolicy {
            lexicon: Lexicon::empty(),
            string_similarity_threshold: 1.0,
            dimension_rules: Dimension::ALL
                .iter()
                .map(|&d| (d, ComparisonMode::Exact))
                .collect(),
        }
    }

    pub fn with_rule(mut self, dimension: Dimension, mode: ComparisonMode) -> Self {
        self.dimension_rules.insert(dimension, mode);
        self
    }

    pub fn with_similarity_threshold(mut self, threshold: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&threshold),
            "similarity threshold must be in [0, 1]"
        );
        self.string_similarity_threshold = threshold;
        self
    }

    /// Compares two already-normalized values under this policy's rule for
    /// the dimension.
    pub fn values_match(&self, dimension: Dimension, a: &str, b: &str) -> bool {
        let mode = self
            .dimension_rules
            .get(&dimension)
            .copied()
            .unwrap_or(ComparisonMode::Exact);
        match mode {
            ComparisonMode::Exact => a == b,
            ComparisonMode::Lexicon => self.lexicon.equivalent(a, b),
            ComparisonMode::LexiconThenSimilarity => {
                self.lexicon.equivalent(a, b)
                    || string_similarity(a, b) >= self.string_similarity_threshold
            }
        }
    }
}

/// Normalized edit-distance similarity: 1 − levenshtein/max-length, and 1.0
/// for two empty strings.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The binary per-dimension indicator: do these two entities agree on
/// `dimension` under the policy?
///
/// Dependent dimensions (everything but disease) are anchored — they can
/// only hold when the diseases also match. A dimension absent on either
/// side never matches.
pub fn entity_match(
    e_ref: &ClinicalEntity,
    e_cand: &ClinicalEntity,
    dimension: Dimension,
    policy: &MatchPolicy,
) -> bool {
    if dimension != Dimension::Disease
        && !policy.values_match(Dimension::Disease, &e_ref.disease, &e_cand.disease)
    {
        return false;
    }
    match (e_ref.dimension(dimension), e_cand.dimension(dimension)) {
        (Some(a), Some(b)) => policy.values_match(dimension, a, b),
        _ => false,
    }
}

/// How one dimension turned out inside an anchored pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionOutcome {
    Matched,
    Mismatched,
    /// Only the reference entity carries the dimension.
    ReferenceOnly,
    /// Only the candidate entity carries the dimension.
    CandidateOnly,
    BothAbsent,
}

/// One anchored reference/candidate pair with per-dimension outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reference_index: usize,
    pub candidate_index: usize,
    pub dimensions: BTreeMap<Dimension, DimensionOutcome>,
}

/// True/false positive tally for one dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTally {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
}

/// Full outcome of matching a candidate entity set against a reference set.
///
/// Invariants, per dimension d: `tp + fn` equals the number of reference
/// entities carrying d, and `tp + fp` equals the number of candidate
/// entities carrying d. `st_gt` and `st_pred` are the raw set sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub per_dimension: BTreeMap<Dimension, DimensionTally>,
    pub matched_pairs: Vec<MatchedPair>,
    pub st_gt: usize,
    pub st_pred: usize,
}

impl MatchResult {
    pub fn tally(&self, dimension: Dimension) -> DimensionTally {
        self.per_dimension.get(&dimension).copied().unwrap_or_default()
    }
}

/// Greedy anchored one-to-one matching with per-dimension ledger counts.
pub fn match_entities(
    reference: &EntitySet,
    candidate: &EntitySet,
    policy: &MatchPolicy,
) -> MatchResult {
    // Anchor diseases: reference order is outer, first eligible candidate
    // (input order) wins, each candidate used at most once.
    let mut candidate_used = vec![false; candidate.len()];
    let mut anchors: Vec<(usize, usize)> = Vec::new();
    for (i, re) in reference.entities.iter().enumerate() {
        for (j, ce) in candidate.entities.iter().enumerate() {
            if !candidate_used[j]
                && policy.values_match(Dimension::Disease, &re.disease, &ce.disease)
            {
                candidate_used[j] = true;
                anchors.push((i, j));
                break;
            }
        }
    }

    let mut per_dimension = BTreeMap::new();
    per_dimension.insert(
        Dimension::Disease,
        DimensionTally {
            tp: anchors.len(),
            fp: candidate.len() - anchors.len(),
            r#fn: reference.len() - anchors.len(),
        },
    );

    for dim in [Dimension::Location, Dimension::Severity, Dimension::Uncertainty] {
        let reference_carrying = reference.carrying(dim).count();
        let candidate_carrying = candidate.carrying(dim).count();
        let tp = anchors
            .iter()
            .filter(|&&(i, j)| {
                match (
                    reference.entities[i].dimension(dim),
                    candidate.entities[j].dimension(dim),
                ) {
                    (Some(a), Some(b)) => policy.values_match(dim, a, b),
                    _ => false,
                }
            })
            .count();
        per_dimension.insert(
            dim,
            DimensionTally {
                tp,
                fp: candidate_carrying - tp,
                r#fn: reference_carrying - tp,
            },
        );
    }

    let matched_pairs = anchors
        .iter()
        .map(|&(i, j)| {
            let re = &reference.entities[i];
            let ce = &candidate.entities[j];
            let dimensions = Dimension::ALL
                .iter()
                .map(|&dim| {
                    let outcome = match (re.dimension(dim), ce.dimension(dim)) {
                        (Some(a), Some(b)) => {
                            if policy.values_match(dim, a, b) {
                                DimensionOutcome::Matched
                            } else {
                                DimensionOutcome::Mismatched
                            }
                        }
                        (Some(_), None) => DimensionOutcome::ReferenceOnly,
                        (None, Some(_)) => DimensionOutcome::CandidateOnly,
                        (None, None) => DimensionOutcome::BothAbsent,
                    };
                    (dim, outcome)
                })
                .collect();
            MatchedPair {
                reference_index: i,
                candidate_index: j,
                dimensions,
            }
        })
        .collect();

    MatchResult {
        per_dimension,
        matched_pairs,
        st_gt: reference.len(),
        st_pred: candidate.len(),
    }
}
