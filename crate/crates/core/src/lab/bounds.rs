//! Closed-form thresholds and sample-size conditions used by the
//! Monte-Carlo checkers.
//!
//! Every function here is a direct evaluation of a formula; the
//! checkers in [`super::trials`] compare empirical behavior against
//! these values. Inputs are taken at face value (the trial configs
//! validate ranges), and all formulas use natural logarithms.

use crate::knn::unit_ball_volume;

/// The paired flagging thresholds: a radius level that every point of
/// zero density must exceed, and a density ceiling that every point
/// with such a radius must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlagThresholds {
    /// `(k / (2 c_beta n v_d))^(1/(beta+d))`
    pub radius: f64,
    /// `5 c_beta^(d/(beta+d)) (k/(n v_d))^(beta/(beta+d))`
    pub density_level: f64,
}

/// Evaluates both flagging thresholds for a density with smoothness
/// constants `(c_beta, beta)` in dimension `d` at sample size `n` and
/// neighbor count `k`. Both go to 0 as `k/n` does.
pub fn flag_thresholds(c_beta: f64, beta: f64, d: usize, n: usize, k: usize) -> FlagThresholds {
    let v_d = unit_ball_volume(d);
    let df = d as f64;
    let nf = n as f64;
    let kf = k as f64;
    let radius = (kf / (2.0 * c_beta * nf * v_d)).powf(1.0 / (beta + df));
    let density_level =
        5.0 * c_beta.powf(df / (beta + df)) * (kf / (nf * v_d)).powf(beta / (beta + df));
    FlagThresholds { radius, density_level }
}

/// Smallest `k` at which the flagging guarantee's constants are
/// satisfied: `2^8 ln(2/delta)^2 d ln n`. Desk-scale runs usually sit
/// below this (the constants are conservative), so callers record
/// the comparison as a flag rather than refusing to run.
pub fn flag_k_floor(delta: f64, d: usize, n: usize) -> f64 {
    256.0 * (2.0 / delta).ln().powi(2) * d as f64 * (n as f64).ln()
}

/// Bound on the fraction of in-distribution points whose radius
/// crosses the flagging threshold: the mass that boundary constants
/// `(c_eta, eta)` allow below the density ceiling.
pub fn false_alarm_bound(c_eta: f64, eta: f64, density_level: f64) -> f64 {
    c_eta * density_level.powf(eta)
}

/// The concentration coefficient `16 ln(2/delta) sqrt(d ln n)` that
/// scales every high-probability deviation in this module.
pub fn concentration_coefficient(delta: f64, d: usize, n: usize) -> f64 {
    16.0 * (2.0 / delta).ln() * (d as f64 * (n as f64).ln()).sqrt()
}

/// A density gap wide enough to force radius ordering, together with
/// the coefficient it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingMargin {
    pub coefficient: f64,
    /// `scale * (coefficient / sqrt(k) + (k/n)^(1/d))`
    pub margin: f64,
}

/// Evaluates the gap that guarantees rank preservation, up to the
/// density-dependent factor `scale`. The margin vanishes whenever
/// `k/n -> 0` and `ln n / sqrt(k) -> 0`.
pub fn ranking_margin(d: usize, n: usize, k: usize, delta: f64, scale: f64) -> RankingMargin {
    let coefficient = concentration_coefficient(delta, d, n);
    let margin =
        scale * (coefficient / (k as f64).sqrt() + (k as f64 / n as f64).powf(1.0 / d as f64));
    RankingMargin { coefficient, margin }
}

/// Largest `k` for which the contraction argument applies:
/// `(1/2) c_0 v_d ((gamma_out - gamma_in)/gamma_in * r_min)^d n`,
/// where `c_0` lower-bounds the fraction of a small ball's volume
/// that lies inside the support.
pub fn contraction_k_ceiling(
    c0: f64,
    d: usize,
    gamma_in: f64,
    gamma_out: f64,
    r_min: f64,
    n: usize,
) -> f64 {
    let spread = (gamma_out - gamma_in) / gamma_in * r_min;
    0.5 * c0 * unit_ball_volume(d) * spread.powi(d as i32) * n as f64
}
