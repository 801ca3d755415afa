//! Out-of-distribution detection over precomputed embeddings, built
//! on k-nearest-neighbor radii.
//!
//! The pipeline: load per-layer embedding matrices ([`tensor_io`]),
//! index them for radius queries ([`knn`]), turn query radii into
//! normalized scores and verdicts ([`scoring`]), and evaluate score
//! quality ([`metrics`]). The [`lab`] module stress-tests the radius
//! machinery against synthetic densities whose ball masses and
//! thresholds have closed forms.

pub mod fmt;
pub mod knn;
pub mod lab;
pub mod metrics;
pub mod scoring;
pub mod tensor_io;

pub use knn::{
    build_index, knn_density, knn_radius, knn_radius_batch, loo_radius, unit_ball_volume,
    IndexStrategy, KnnError, KnnIndex, PointSet, RadiusQueryResult,
};
pub use metrics::{
    pr_at_threshold, radius_histogram, roc_auc, HistogramSpec, LabeledScores, MetricsError,
    RadiusHistogram, ThresholdReport,
};
pub use scoring::{
    aggregate_statistic, classify_threshold, estimate_normalizer, estimate_normalizer_with_index,
    layer_statistic, score_stack, LayerNormalizer, OodScorecard, ScoreError,
};
pub use tensor_io::{
    load_layer_stack, load_matrix, parse_csv_matrix, parse_emb, write_emb, Dtype, EmbeddingMatrix,
    LayerStack, TensorError,
};
