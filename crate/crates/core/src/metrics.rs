//! Threshold-free and thresholded evaluation of detection scores.
//!
//! Scores follow the convention that larger means more anomalous, so
//! the out-of-distribution class is the positive class. The AUC here
//! is the Mann-Whitney statistic with midranks: the probability that
//! a random positive outscores a random negative, counting ties as
//! half. Rank sums accumulate half-integers, which `f64` represents
//! exactly, so identities such as "duplicating every score changes
//! nothing" hold to the bit.

use thiserror::Error;

use crate::fmt::g17;

/// Errors from metric computation.
#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores contain a non-finite value")]
    NonFiniteScore,
    #[error("the {class} score set is empty")]
    EmptyClass { class: &'static str },
    #[error("histogram needs at least one value")]
    EmptyInput,
    #[error("histogram needs at least one bin")]
    NonPositiveBinCount,
    #[error("histogram range ({lo}, {hi}) is not a finite, nonempty interval")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Detection scores split by ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    in_scores: Vec<f64>,
    out_scores: Vec<f64>,
}

impl LabeledScores {
    /// # Errors
    ///
    /// `NonFiniteScore` if any score is NaN or infinite. Empty classes
    /// are allowed here and rejected by the metrics that need them.
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self, MetricsError> {
        if in_scores.iter().chain(&out_scores).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteScore);
        }
        Ok(Self { in_scores, out_scores })
    }

    pub fn in_scores(&self) -> &[f64] {
        &self.in_scores
    }

    pub fn out_scores(&self) -> &[f64] {
        &self.out_scores
    }
}

/// Area under the ROC curve by midranks.
///
/// Sorts the pooled scores once, accumulates the positive rank sum
/// with ties resolved to the group's midrank, and converts the rank
/// sum to the Mann-Whitney count of (positive, negative) pairs won
/// plus half the ties. That count is a half-integer, held exactly.
///
/// # Errors
///
/// `EmptyClass` when either side has no scores.
pub fn roc_auc(scores: &LabeledScores) -> Result<f64, MetricsError> {
    let a = scores.in_scores.len();
    let b = scores.out_scores.len();
    if a == 0 {
        return Err(MetricsError::EmptyClass { class: "in-distribution" });
    }
    if b == 0 {
        return Err(MetricsError::EmptyClass { class: "out-of-distribution" });
    }
    let mut pool: Vec<(f64, bool)> = scores
        .in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(scores.out_scores.iter().map(|&s| (s, true)))
        .collect();
    pool.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("scores are finite"));

    let mut rank_sum_out = 0.0_f64;
    let mut i = 0;
    while i < pool.len() {
        let mut j = i;
        while j + 1 < pool.len() && pool[j + 1].0 == pool[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the midrank; the sum
        // (i + j + 2) is even exactly when the group size is odd, so
        // the midrank is always an exact half-integer.
        let midrank = (i + j + 2) as f64 / 2.0;
        let out_in_group = pool[i..=j].iter().filter(|(_, is_out)| *is_out).count();
        rank_sum_out += midrank * out_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_out - (b * (b + 1)) as f64 / 2.0;
    Ok(u / (a as f64 * b as f64))
}

/// Error rates of the strict-threshold decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    /// Fraction of out-of-distribution scores strictly above the
    /// threshold (true positive rate).
    pub recall: f64,
    /// Fraction of in-distribution scores strictly above the
    /// threshold (false positive rate).
    pub false_alarm: f64,
}

/// Evaluates the rule "flag iff score > threshold" on both classes.
///
/// # Errors
///
/// `EmptyClass` when either side has no scores.
pub fn pr_at_threshold(scores: &LabeledScores, threshold: f64) -> Result<ThresholdReport, MetricsError> {
    if scores.in_scores.is_empty() {
        return Err(MetricsError::EmptyClass { class: "in-distribution" });
    }
    if scores.out_scores.is_empty() {
        return Err(MetricsError::EmptyClass { class: "out-of-distribution" });
    }
    let above = |v: &[f64]| v.iter().filter(|&&s| s > threshold).count() as f64 / v.len() as f64;
    Ok(ThresholdReport { recall: above(&scores.out_scores), false_alarm: above(&scores.in_scores) })
}

/// Binning request for [`radius_histogram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    /// `None` spans the pooled min..max of both classes.
    pub range: Option<(f64, f64)>,
}

/// Per-class counts over a shared equal-width binning.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusHistogram {
    /// `bins + 1` edges; every bin is half-open `[lo, hi)` except the
    /// last, which also includes its upper edge.
    pub edges: Vec<f64>,
    pub in_counts: Vec<u64>,
    pub out_counts: Vec<u64>,
}

impl RadiusHistogram {
    pub fn bins(&self) -> usize {
        self.in_counts.len()
    }

    /// CSV rows `bin_lo,bin_hi,count_in,count_out` under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count_in,count_out\n");
        for b in 0..self.bins() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g17(self.edges[b]),
                g17(self.edges[b + 1]),
                self.in_counts[b],
                self.out_counts[b],
            ));
        }
        out
    }
}

/// Histograms two score samples over one shared binning so the class
/// shapes can be compared bin by bin. Values outside an explicit
/// range are clamped into the edge bins; every input value is counted
/// exactly once.
///
/// # Errors
///
/// `ZeroBins`, `EmptyInput` when both classes are empty,
/// `InvalidRange` for a non-finite or empty explicit range, and
/// `NonFiniteScore` for NaN or infinite values.
pub fn radius_histogram(
    in_values: &[f64],
    out_values: &[f64],
    spec: &HistogramSpec,
) -> Result<RadiusHistogram, MetricsError> {
    if spec.bins == 0 {
        return Err(MetricsError::NonPositiveBinCount);
    }
    if in_values.is_empty() && out_values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if in_values.iter().chain(out_values).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    let (lo, hi) = match spec.range {
        Some((lo, hi)) => {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(MetricsError::InvalidRange { lo, hi });
            }
            (lo, hi)
        }
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in in_values.iter().chain(out_values) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi == lo {
                // All values identical: give the single point a unit-wide
                // bin so the histogram stays well formed.
                (lo, lo + 1.0)
            } else {
                (lo, hi)
            }
        }
    };

    let bins = spec.bins;
    let mut edges = Vec::with_capacity(bins + 1);
    for i in 0..=bins {
        edges.push(lo + (hi - lo) * i as f64 / bins as f64);
    }
    edges[bins] = hi;

    let width_recip = bins as f64 / (hi - lo);
    let bin_of = |v: f64| -> usize {
        let raw = ((v - lo) * width_recip).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(bins - 1)
        }
    };
    let mut in_counts = vec![0_u64; bins];
    let mut out_counts = vec![0_u64; bins];
    for &v in in_values {
        in_counts[bin_of(v)] += 1;
    }
    for &v in out_values {
        out_counts[bin_of(v)] += 1;
    }
    Ok(RadiusHistogram { edges, in_counts, out_counts })
}
