//! Normalized radius scores for out-of-distribution detection.
//!
//! Each layer scores a query by its k-NN radius against that layer's
//! training embeddings, divided by a per-layer scale estimate so that
//! layers with different geometry can be averaged. The scale is the
//! mean leave-one-out radius of the training points themselves, which
//! makes the training set score to 1 on average by construction.
//! Scores from all layers are averaged into one statistic; a query is
//! called out-of-distribution when that statistic strictly exceeds the
//! chosen threshold.

use rayon::prelude::*;
use thiserror::Error;

use crate::fmt::g17;
use crate::knn::{build_index, loo_radius, knn_radius_batch, IndexStrategy, KnnError, KnnIndex, PointSet};
use crate::tensor_io::{EmbeddingMatrix, LayerStack};

/// Errors from normalizer estimation and stack scoring.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("degenerate normalizer: every leave-one-out radius in the layer is zero")]
    DegenerateNormalizer,
    #[error("k mismatch: normalizer was built with k = {normalizer}, statistic requested k = {requested}")]
    KMismatch { normalizer: usize, requested: usize },
    #[error("aggregate needs at least one layer")]
    EmptyLayerList,
    #[error("per-layer score vectors have unequal lengths")]
    LayerLengthMismatch,
    #[error("train stack has {train} layers, query stack has {queries} layers")]
    LayerCountMismatch { train: usize, queries: usize },
    #[error("layer {layer}: {source}")]
    InLayer { layer: usize, source: Box<ScoreError> },
    #[error(transparent)]
    Knn(#[from] KnnError),
}

impl ScoreError {
    fn in_layer(self, layer: usize) -> Self {
        ScoreError::InLayer { layer, source: Box::new(self) }
    }

    /// True when the underlying cause is a degenerate normalizer,
    /// looking through layer wrappers.
    pub fn is_degenerate(&self) -> bool {
        match self {
            ScoreError::DegenerateNormalizer => true,
            ScoreError::InLayer { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

/// Per-layer scale estimate: the mean leave-one-out k-NN radius over
/// the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormalizer {
    pub q_hat: f64,
    pub k: usize,
    pub n: usize,
}

/// Estimates the scale of one training layer.
///
/// # Errors
///
/// `Knn(KTooLarge)` unless `1 <= k <= n - 1`, `DegenerateNormalizer`
/// when every leave-one-out radius is zero (all points coincide).
pub fn estimate_normalizer(train: PointSet<'_>, k: usize) -> Result<LayerNormalizer, ScoreError> {
    let index = build_index(train, IndexStrategy::Auto);
    estimate_normalizer_with_index(&index, k)
}

/// As [`estimate_normalizer`], reusing an already-built index.
pub fn estimate_normalizer_with_index(index: &KnnIndex<'_>, k: usize) -> Result<LayerNormalizer, ScoreError> {
    let n = index.len();
    let mut radii: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| loo_radius(index, i, k))
        .collect::<Result<_, _>>()?;
    // Summing in sorted order makes the estimate exactly invariant to
    // the order of the training rows.
    radii.sort_unstable_by(f64::total_cmp);
    let q_hat = mean(&radii);
    if q_hat == 0.0 {
        return Err(ScoreError::DegenerateNormalizer);
    }
    Ok(LayerNormalizer { q_hat, k, n })
}

/// Normalized radius statistic of every query row against one layer:
/// k-NN radius divided by the layer scale.
///
/// # Errors
///
/// `KMismatch` when `k` differs from the normalizer's, plus any query
/// error from the radius batch.
pub fn layer_statistic(
    index: &KnnIndex<'_>,
    normalizer: &LayerNormalizer,
    queries: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<f64>, ScoreError> {
    if k != normalizer.k {
        return Err(ScoreError::KMismatch { normalizer: normalizer.k, requested: k });
    }
    let radii = knn_radius_batch(index, queries, k)?;
    Ok(radii.into_iter().map(|r| r / normalizer.q_hat).collect())
}

/// Averages per-layer statistics into one score per query.
///
/// # Errors
///
/// `EmptyLayerList`, or `LayerLengthMismatch` when the vectors
/// disagree on the query count.
pub fn aggregate_statistic(per_layer: &[Vec<f64>]) -> Result<Vec<f64>, ScoreError> {
    let first = per_layer.first().ok_or(ScoreError::EmptyLayerList)?;
    let n = first.len();
    if per_layer.iter().any(|l| l.len() != n) {
        return Err(ScoreError::LayerLengthMismatch);
    }
    let m = per_layer.len() as f64;
    let mut out = vec![0.0; n];
    for layer in per_layer {
        for (acc, v) in out.iter_mut().zip(layer) {
            *acc += v;
        }
    }
    for acc in &mut out {
        *acc /= m;
    }
    Ok(out)
}

/// One-sided decision rule: a score strictly above the threshold is
/// called out-of-distribution.
pub fn classify_threshold(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

/// Full scoring output for a stack of query layers against a stack of
/// training layers.
#[derive(Debug, Clone, PartialEq)]
pub struct OodScorecard {
    pub k: usize,
    /// `[layer][query]` raw k-NN radii.
    pub per_layer_radii: Vec<Vec<f64>>,
    /// `[layer][query]` normalized statistics.
    pub per_layer_statistics: Vec<Vec<f64>>,
    /// Cross-layer mean statistic per query.
    pub aggregate: Vec<f64>,
    pub threshold: Option<f64>,
    /// Present iff a threshold was supplied.
    pub verdicts: Option<Vec<bool>>,
}

impl OodScorecard {
    pub fn layer_count(&self) -> usize {
        self.per_layer_radii.len()
    }

    pub fn query_count(&self) -> usize {
        self.aggregate.len()
    }

    /// Renders the scorecard as CSV: one block of per-layer rows
    /// (`query_id,layer,radius,t_layer`), a blank line, then a summary
    /// block (`query_id,t_aggregate[,verdict]`). Floats carry 17
    /// significant digits so equal scorecards serialize to equal
    /// bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("query_id,layer,radius,t_layer\n");
        for q in 0..self.query_count() {
            for layer in 0..self.layer_count() {
                out.push_str(&format!(
                    "{q},{layer},{},{}\n",
                    g17(self.per_layer_radii[layer][q]),
                    g17(self.per_layer_statistics[layer][q]),
                ));
            }
        }
        out.push('\n');
        match (&self.verdicts, self.threshold) {
            (Some(verdicts), Some(_)) => {
                out.push_str("query_id,t_aggregate,verdict\n");
                for (q, (t, v)) in self.aggregate.iter().zip(verdicts).enumerate() {
                    out.push_str(&format!("{q},{},{v}\n", g17(*t)));
                }
            }
            _ => {
                out.push_str("query_id,t_aggregate\n");
                for (q, t) in self.aggregate.iter().enumerate() {
                    out.push_str(&format!("{q},{}\n", g17(*t)));
                }
            }
        }
        out
    }
}

/// Scores every query layer against the matching training layer and
/// aggregates across layers.
///
/// # Errors
///
/// `LayerCountMismatch` when the stacks disagree on layer count;
/// per-layer failures (dimension mismatch, `k` out of range,
/// degenerate normalizer) are wrapped in `InLayer` with the layer
/// index.
pub fn score_stack(
    train: &LayerStack,
    queries: &LayerStack,
    k: usize,
    threshold: Option<f64>,
) -> Result<OodScorecard, ScoreError> {
    if train.layer_count() != queries.layer_count() {
        return Err(ScoreError::LayerCountMismatch {
            train: train.layer_count(),
            queries: queries.layer_count(),
        });
    }
    let mut per_layer_radii = Vec::with_capacity(train.layer_count());
    let mut per_layer_statistics = Vec::with_capacity(train.layer_count());
    for (layer, (train_layer, query_layer)) in train.layers().iter().zip(queries.layers()).enumerate() {
        let index = build_index(PointSet::new(train_layer), IndexStrategy::Auto);
        let normalizer =
            estimate_normalizer_with_index(&index, k).map_err(|e| e.in_layer(layer))?;
        let radii = knn_radius_batch(&index, query_layer, k)
            .map_err(|e| ScoreError::from(e).in_layer(layer))?;
        let statistics: Vec<f64> = radii.iter().map(|r| r / normalizer.q_hat).collect();
        per_layer_radii.push(radii);
        per_layer_statistics.push(statistics);
    }
    let aggregate = aggregate_statistic(&per_layer_statistics)?;
    let verdicts = threshold.map(|t| classify_threshold(&aggregate, t));
    Ok(OodScorecard { k, per_layer_radii, per_layer_statistics, aggregate, threshold, verdicts })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
