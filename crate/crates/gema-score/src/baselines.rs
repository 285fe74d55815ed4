//! From-scratch overlap metrics — BLEU-1, ROUGE-L, and a simplified METEOR —
//! used as comparison columns in benchmark runs.
//!
//! These are documented-default implementations (tokenizer below, no BLEU
//! smoothing, METEOR without synonym/paraphrase stages), so published
//! baseline numbers computed with other toolchains are not expected to
//! reproduce exactly. Their role is comparative, on a shared tokenizer.

use std::collections::HashMap;

/// An ordered list of lowercase word tokens. Only [`tokenize`] builds these,
/// which keeps every metric on the exact same segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercase, split on runs of non-alphanumeric characters, drop empties.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence {
        tokens: text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect(),
    }
}

/// Unigram BLEU: clipped precision times the brevity penalty
/// exp(1 − r/c) applied when the candidate is shorter than the reference.
/// An empty candidate scores 0.
pub fn bleu1(reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let r = reference.len();

    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in reference.tokens() {
        *ref_counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in candidate.tokens() {
        *cand_counts.entry(t.as_str()).or_insert(0) += 1;
    }

    let clipped: usize = cand_counts
        .iter()
        .map(|(tok, &count)| count.min(ref_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    let precision = clipped as f64 / c as f64;

    let brevity = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    precision * brevity
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_length(a: &TokenSequence, b: &TokenSequence) -> usize {
    let a = a.tokens();
    let b = b.tokens();
    // One-row DP; prev holds the previous row of the classic table.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure: P = LCS/|cand|, R = LCS/|ref|, F = 2PR/(P+R);
/// 0 whenever the LCS is empty.
pub fn rouge_l(reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    let lcs = lcs_length(reference, candidate);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Suffix-stripping stemmer used by the METEOR stem stage: the first listed
/// suffix whose removal leaves at least three characters is stripped.
pub fn stem(word: &str) -> String {
    const SUFFIXES: [&str; 5] = ["ing", "ed", "es", "ly", "s"];
    for suffix in SUFFIXES {
        if let Some(s) = word.strip_suffix(suffix) {
            if s.chars().count() >= 3 {
                return s.to_string();
            }
        }
    }
    word.to_string()
}

/// Simplified METEOR: exact then stem-stage unigram alignment,
/// F_mean = 10PR/(R+9P), fragmentation penalty 0.5·(chunks/matches)³,
/// score = F_mean·(1 − penalty). No matches → 0.
pub fn meteor(reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }

    // alignment[i] = Some(j): candidate token i matched to reference token j.
    let mut alignment: Vec<Option<usize>> = vec![None; candidate.len()];
    let mut ref_used = vec![false; reference.len()];

    // Stage 1: exact surface matches, earliest unmatched reference token.
    for (i, ct) in candidate.tokens().iter().enumerate() {
        for (j, rt) in reference.tokens().iter().enumerate() {
            if !ref_used[j] && ct == rt {
                alignment[i] = Some(j);
                ref_used[j] = true;
                break;
            }
        }
    }
    // Stage 2: stem matches for whatever is still unmatched.
    let cand_stems: Vec<String> = candidate.tokens().iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = reference.tokens().iter().map(|t| stem(t)).collect();
    for (i, cs) in cand_stems.iter().enumerate() {
        if alignment[i].is_some() {
            continue;
        }
        for (j, rs) in ref_stems.iter().enumerate() {
            if !ref_used[j] && cs == rs {
                alignment[i] = Some(j);
                ref_used[j] = true;
                break;
            }
        }
    }

    let matches = alignment.iter().flatten().count();
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);

    // Chunks: maximal runs of matches contiguous in both sequences.
    let mut chunks = 0usize;
    let mut prev: Option<(usize, usize)> = None;
    for (i, j) in alignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
    {
        let contiguous = prev.is_some_and(|(pi, pj)| i == pi + 1 && j == pj + 1);
        if !contiguous {
            chunks += 1;
        }
        prev = Some((i, j));
    }

    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}
