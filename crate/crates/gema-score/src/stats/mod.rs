//! Rank and product-moment correlation with significance testing, plus
//! lightweight distribution summaries.
//!
//! Error-count data from human raters is heavily tied, so the Kendall
//! statistic here is the tie-corrected τ-b with the tie-adjusted normal
//! approximation for its p-value; an exact permutation variant is available
//! for very small samples. Undefined correlations (constant input) are
//! reported as errors, never as a silent 0.

mod special;

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::par_map;
use special::{normal_two_sided, student_t_two_sided};

/// Largest sample size accepted by the exact permutation test (n! grows fast).
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("paired samples must have equal length, got {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {required} samples, got {n}")]
    TooFewSamples { n: usize, required: usize },
    #[error("non-finite value in {side} at index {index}")]
    NonFinite { side: &'static str, index: usize },
    #[error("{side} is constant; the correlation is undefined")]
    DegenerateInput { side: &'static str },
    #[error("exact permutation test supports n <= {max}, got {n}")]
    PermutationTooLarge { n: usize, max: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("bin count must be positive")]
    ZeroBins,
}

/// Which correlation statistic a result came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KendallB,
    Spearman,
    Pearson,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::KendallB => "kendall_b",
            Method::Spearman => "spearman",
            Method::Pearson => "pearson",
        }
    }
}

/// A coefficient with its significance.
///
/// `p_value` is `None` when the sample is too small for the significance
/// machinery (n < 3); the coefficient itself may still be defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub method: Method,
}

/// Validated equal-length, all-finite paired observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSamples {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedSamples {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(StatsError::TooFewSamples {
                n: x.len(),
                required: 2,
            });
        }
        for (side, v) in [("x", &x), ("y", &y)] {
            if let Some(index) = v.iter().position(|w| !w.is_finite()) {
                return Err(StatsError::NonFinite { side, index });
            }
        }
        Ok(PairedSamples { x, y })
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        Self::new(x.to_vec(), y.to_vec())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: n >= 2
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn reject_constant(&self) -> Result<(), StatsError> {
        if is_constant(&self.x) {
            return Err(StatsError::DegenerateInput { side: "x" });
        }
        if is_constant(&self.y) {
            return Err(StatsError::DegenerateInput { side: "y" });
        }
        Ok(())
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Tie structure of one variable: the three tie sums used by the τ-b
/// denominator and the tie-corrected variance.
struct TieStats {
    /// Σ t(t−1)/2 over tie groups.
    pairs: f64,
    /// Σ t(t−1)(2t+5).
    v1: f64,
    /// Σ t(t−1)(t−2).
    v2: f64,
}

fn tie_stats(v: &[f64]) -> TieStats {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut stats = TieStats {
        pairs: 0.0,
        v1: 0.0,
        v2: 0.0,
    };
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        stats.pairs += t * (t - 1.0) / 2.0;
        stats.v1 += t * (t - 1.0) * (2.0 * t + 5.0);
        stats.v2 += t * (t - 1.0) * (t - 2.0);
        i = j + 1;
    }
    stats
}

/// Concordant-minus-discordant pair count (the Kendall S statistic).
fn kendall_s(x: &[f64], y: &[f64]) -> i64 {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let ox = x[i].partial_cmp(&x[j]).unwrap();
            let oy = y[i].partial_cmp(&y[j]).unwrap();
            if ox != Ordering::Equal && oy != Ordering::Equal {
                s += if ox == oy { 1 } else { -1 };
            }
        }
    }
    s
}

fn kendall_coefficient(samples: &PairedSamples) -> (f64, i64, TieStats, TieStats) {
    let n = samples.len() as f64;
    let s = kendall_s(samples.x(), samples.y());
    let tx = tie_stats(samples.x());
    let ty = tie_stats(samples.y());
    let n0 = n * (n - 1.0) / 2.0;
    let denom = ((n0 - tx.pairs) * (n0 - ty.pairs)).sqrt();
    let tau = (s as f64 / denom).clamp(-1.0, 1.0);
    (tau, s, tx, ty)
}

/// Tie-corrected Kendall rank correlation (τ-b) with a normal-approximation
/// p-value using the full tie-adjusted variance of S.
pub fn kendall_tau_b(samples: &PairedSamples) -> Result<CorrelationResult, StatsError> {
    samples.reject_constant()?;
    let n = samples.len();
    let (tau, s, tx, ty) = kendall_coefficient(samples);

    let p_value = if n >= 3 {
        let nf = n as f64;
        let m = nf * (nf - 1.0);
        let var_s = (m * (2.0 * nf + 5.0) - tx.v1 - ty.v1) / 18.0
            + 2.0 * tx.pairs * ty.pairs / m
            + tx.v2 * ty.v2 / (9.0 * m * (nf - 2.0));
        (var_s > 0.0).then(|| normal_two_sided(s as f64 / var_s.sqrt()).min(1.0))
    } else {
        None
    };

    Ok(CorrelationResult {
        coefficient: tau,
        p_value,
        n,
        method: Method::KendallB,
    })
}

/// τ-b with an exact permutation p-value: the fraction of all n! orderings
/// of y whose |S| is at least the observed |S|. Only for n ≤ 10.
pub fn kendall_tau_b_exact(samples: &PairedSamples) -> Result<CorrelationResult, StatsError> {
    let n = samples.len();
    if n > EXACT_PERMUTATION_MAX_N {
        return Err(StatsError::PermutationTooLarge {
            n,
            max: EXACT_PERMUTATION_MAX_N,
        });
    }
    samples.reject_constant()?;
    let (tau, s_obs, _, _) = kendall_coefficient(samples);

    // The τ-b denominator is permutation-invariant (tie structure of y does
    // not change under reordering), so comparing |S| compares |τ|.
    let s_obs = s_obs.abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut y = samples.y().to_vec();
    for_each_permutation(&mut y, |perm| {
        total += 1;
        if kendall_s(samples.x(), perm).abs() >= s_obs {
            hits += 1;
        }
    });

    Ok(CorrelationResult {
        coefficient: tau,
        p_value: Some(hits as f64 / total as f64),
        n,
        method: Method::KendallB,
    })
}

/// Heap's algorithm; calls `f` once per permutation of `values`.
fn for_each_permutation<F: FnMut(&[f64])>(values: &mut [f64], mut f: F) {
    let n = values.len();
    let mut c = vec![0usize; n];
    f(values);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                values.swap(0, i);
            } else {
                values.swap(c[i], i);
            }
            f(values);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Single sqrt keeps perfectly correlated inputs at exactly 1.0: the
    // cross and self sums coincide, and IEEE sqrt of an exact square of a
    // representable sum is exact.
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided p from the t transform of a correlation coefficient.
fn t_tail_p(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    let denom = (1.0 - r * r).max(0.0);
    if denom == 0.0 {
        return Some(0.0);
    }
    Some(student_t_two_sided(r * (df / denom).sqrt(), df))
}

/// Spearman rank correlation: Pearson on midranks, p via the t-statistic
/// with n−2 degrees of freedom.
pub fn spearman_rho(samples: &PairedSamples) -> Result<CorrelationResult, StatsError> {
    samples.reject_constant()?;
    let rx = midranks(samples.x());
    let ry = midranks(samples.y());
    let rho = pearson_coefficient(&rx, &ry);
    Ok(CorrelationResult {
        coefficient: rho,
        p_value: t_tail_p(rho, samples.len()),
        n: samples.len(),
        method: Method::Spearman,
    })
}

/// Product-moment correlation, p via the two-sided t-test (Student-t tail
/// through the regularized incomplete beta).
pub fn pearson_r(samples: &PairedSamples) -> Result<CorrelationResult, StatsError> {
    samples.reject_constant()?;
    let r = pearson_coefficient(samples.x(), samples.y());
    Ok(CorrelationResult {
        coefficient: r,
        p_value: t_tail_p(r, samples.len()),
        n: samples.len(),
        method: Method::Pearson,
    })
}

fn run_method(x: &[f64], y: &[f64], method: Method) -> Result<CorrelationResult, StatsError> {
    let samples = PairedSamples::from_slices(x, y)?;
    match method {
        Method::KendallB => kendall_tau_b(&samples),
        Method::Spearman => spearman_rho(&samples),
        Method::Pearson => pearson_r(&samples),
    }
}

/// Square matrix of pairwise correlations over named columns.
///
/// `None` cells mark pairs whose correlation is undefined (a constant
/// column). The diagonal is unit by convention: coefficient 1, p 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub method: Method,
    pub cells: Vec<Vec<Option<CorrelationResult>>>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<&CorrelationResult> {
        self.cells[i][j].as_ref()
    }

    /// Coefficient-only CSV export; undefined cells read "undefined".
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for j in 0..self.labels.len() {
                out.push(',');
                match &self.cells[i][j] {
                    Some(cell) => write!(out, "{:.6}", cell.coefficient).unwrap(),
                    None => out.push_str("undefined"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise correlation of every column pair. Cells are independent, so the
/// upper triangle is dispatched through the data-parallel helper.
pub fn correlation_matrix(
    columns: &[(String, Vec<f64>)],
    method: Method,
) -> Result<CorrelationMatrix, StatsError> {
    if columns.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let rows = columns[0].1.len();
    for (_, col) in columns {
        if col.len() != rows {
            return Err(StatsError::LengthMismatch {
                left: rows,
                right: col.len(),
            });
        }
    }

    let k = columns.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .collect();
    let computed = par_map(pairs, |(i, j)| {
        (i, j, run_method(&columns[i].1, &columns[j].1, method))
    });

    let mut cells: Vec<Vec<Option<CorrelationResult>>> = vec![vec![None; k]; k];
    for (i, row) in cells.iter_mut().enumerate() {
        row[i] = Some(CorrelationResult {
            coefficient: 1.0,
            p_value: Some(0.0),
            n: rows,
            method,
        });
    }
    for (i, j, result) in computed {
        let cell = match result {
            Ok(r) => Some(r),
            Err(StatsError::DegenerateInput { .. }) => None,
            Err(e) => return Err(e),
        };
        cells[i][j].clone_from(&cell);
        cells[j][i] = cell;
    }

    Ok(CorrelationMatrix {
        labels: columns.iter().map(|(name, _)| name.clone()).collect(),
        method,
        cells,
    })
}

/// Histogram plus Gaussian kernel density estimate of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub kde_grid: Vec<f64>,
    pub kde_values: Vec<f64>,
}

const KDE_GRID_POINTS: usize = 200;

/// Equal-width histogram over [min, max] with a Silverman-bandwidth Gaussian
/// KDE evaluated on a fixed grid spanning the data ± 3 bandwidths.
pub fn distribution_summary(
    values: &[f64],
    bin_count: usize,
) -> Result<DistributionSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if bin_count == 0 {
        return Err(StatsError::ZeroBins);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite {
            side: "values",
            index,
        });
    }

    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;

    let bin_edges: Vec<f64> = (0..=bin_count)
        .map(|i| min + span * i as f64 / bin_count as f64)
        .collect();
    let mut counts = vec![0u64; bin_count];
    if span == 0.0 {
        // Degenerate range: everything lands in the first bin.
        counts[0] = values.len() as u64;
    } else {
        for v in values {
            let idx = ((v - min) / span * bin_count as f64) as usize;
            counts[idx.min(bin_count - 1)] += 1;
        }
    }

    let h = silverman_bandwidth(values);
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let kde_grid: Vec<f64> = (0..KDE_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID_POINTS - 1) as f64)
        .collect();
    let kde_values: Vec<f64> = kde_grid.iter().map(|&g| kde_at(values, h, g)).collect();

    Ok(DistributionSummary {
        bin_edges,
        counts,
        kde_grid,
        kde_values,
    })
}

/// Silverman's rule of thumb: 0.9 · min(s, IQR/1.34) · n^(−1/5), falling
/// back to whichever spread estimate is positive, or 1.0 if neither is.
fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let s = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    let spread = match (s > 0.0, iqr > 0.0) {
        (true, true) => s.min(iqr / 1.34),
        (true, false) => s,
        (false, true) => iqr / 1.34,
        (false, false) => return 1.0,
    };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolation quantile of pre-sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

fn kde_at(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len() as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    values
        .iter()
        .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
        .sum::<f64>()
        * norm
}
