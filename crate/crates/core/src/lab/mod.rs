//! Monte-Carlo validation harness for the finite-sample guarantees
//! behind the radius score.
//!
//! Everything here runs on synthetic densities whose constants
//! (smoothness, boundary mass, lower bounds, ball masses) are known in
//! closed form, so the harness can compare empirical behavior against
//! exact thresholds instead of estimates. Four checkers are provided:
//!
//! * [`trials::run_flagging_trial`]: outliers exceed the radius
//!   threshold, flagged points have low density, and the false-alarm
//!   rate stays under its bound.
//! * [`trials::run_ranking_trial`]: a density gap between two points
//!   forces the denser one to have the smaller radius.
//! * [`trials::run_contraction_trial`]: the piecewise scaling map
//!   strictly improves the outlier-to-inlier radius ratio.
//! * [`trials::ball_mass_check`]: empirical ball counts respect
//!   their concentration envelopes.
//!
//! Every run is reproducible: all randomness flows from an explicit
//! seed, trial `t` uses `seed + t`, and reports serialize to stable
//! bytes.

pub mod bounds;
pub mod density;
pub mod geometry;
pub mod report;
pub mod trials;

use thiserror::Error;

use crate::knn::KnnError;
use crate::metrics::MetricsError;

/// Errors from the validation harness.
#[derive(Debug, Error, PartialEq)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point lies strictly inside the support; projection needs a point on or outside the boundary")]
    InteriorPoint,
    #[error("no closed-form ball mass for the {family} family in dimension {dim}")]
    UnsupportedBallMass { family: &'static str, dim: usize },
    #[error("density self-check failed: numeric integral {integral} is not 1")]
    SelfCheckFailed { integral: f64 },
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub use bounds::{
    concentration_coefficient, contraction_k_ceiling, false_alarm_bound, flag_k_floor,
    flag_thresholds, ranking_margin, FlagThresholds, RankingMargin,
};
pub use density::{BoundaryConstants, DensityFamily, HolderConstants, SyntheticDensity};
pub use geometry::{
    ball_ball_intersection_volume, ball_volume, contraction_map, disc_rect_area,
    spherical_cap_volume, Support,
};
pub use report::{TrialReport, TrialRow};
pub use trials::{
    ball_mass_check, run_contraction_trial, run_flagging_trial, run_ranking_trial,
    BallMassConfig, ContractionConfig, FlaggingConfig, RankingConfig,
};
