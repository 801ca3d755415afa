//! The four Monte-Carlo checkers.
//!
//! Each checker samples datasets from a synthetic density, measures
//! radius behavior with the real k-NN machinery, and compares it
//! against the closed-form thresholds of [`super::bounds`]. Trials
//! are independent: trial `t` seeds its own generator with
//! `seed + t`, so they can run in parallel and still merge into a
//! deterministic report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bounds::{
    concentration_coefficient, contraction_k_ceiling, false_alarm_bound, flag_k_floor,
    flag_thresholds,
};
use super::density::SyntheticDensity;
use super::geometry::{contraction_map, Support};
use super::report::{TrialReport, TrialRow};
use super::LabError;
use crate::knn::{
    build_index, knn_density, knn_radius_batch, unit_ball_volume, IndexStrategy, KnnIndex,
    PointSet,
};
use crate::metrics::{roc_auc, LabeledScores};
use crate::tensor_io::EmbeddingMatrix;

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64))
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), LabError> {
    if ok {
        Ok(())
    } else {
        Err(LabError::InvalidConfig(msg()))
    }
}

fn matrix_from_rows(rows: Vec<f64>, n: usize, d: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::new(n, d, rows).expect("synthetic points are finite and rectangular")
}

fn support_kind(support: &Support) -> &'static str {
    match support {
        Support::Ball { .. } => "ball",
        Support::Rect { .. } => "box",
    }
}

/// Configuration for [`run_flagging_trial`].
#[derive(Debug, Clone)]
pub struct FlaggingConfig {
    pub density: SyntheticDensity,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub trials: usize,
    /// Probes drawn from the density itself.
    pub in_probes: usize,
    /// Probes placed at `outlier_margin` outside the support.
    pub out_probes: usize,
    pub outlier_margin: f64,
    pub seed: u64,
}

impl FlaggingConfig {
    fn validate(&self) -> Result<(), LabError> {
        require(self.density.smoothness().is_some(), || {
            format!(
                "the {} family has no smoothness constants; flagging thresholds need them",
                self.density.family()
            )
        })?;
        require(self.n >= 2, || format!("need at least 2 training points, got {}", self.n))?;
        require(self.k >= 1 && self.k <= self.n, || {
            format!("k must be in 1..={}, got {}", self.n, self.k)
        })?;
        require(self.delta > 0.0 && self.delta < 1.0, || {
            format!("delta must be in (0, 1), got {}", self.delta)
        })?;
        require(self.trials >= 1, || "need at least one trial".to_owned())?;
        require(self.in_probes >= 1 && self.out_probes >= 1, || {
            "need at least one probe of each kind".to_owned()
        })?;
        require(self.outlier_margin > 0.0 && self.outlier_margin.is_finite(), || {
            format!("outlier margin must be positive, got {}", self.outlier_margin)
        })
    }
}

/// Checks the flagging guarantee: per trial, (a) every probe placed
/// outside the support has radius at least the radius threshold,
/// (b) every probe whose radius crosses that threshold has density at
/// most the density ceiling, and (c) the fraction of in-distribution
/// probes crossing it stays within the false-alarm bound (checked
/// when the density has boundary constants). The report carries one
/// row per check per trial plus pass rates, thresholds, and the
/// k-feasibility flag in the summary.
pub fn run_flagging_trial(cfg: &FlaggingConfig) -> Result<TrialReport, LabError> {
    cfg.validate()?;
    let d = cfg.density.dim();
    let smooth = cfg.density.smoothness().expect("validated above");
    let thresholds = flag_thresholds(smooth.c_beta, smooth.beta, d, cfg.n, cfg.k);
    let k_floor = flag_k_floor(cfg.delta, d, cfg.n);
    let alarm_bound = cfg
        .density
        .boundary()
        .map(|b| false_alarm_bound(b.c_eta, b.eta, thresholds.density_level));

    let per_trial: Vec<Vec<TrialRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<TrialRow>, LabError> {
            let mut rng = trial_rng(cfg.seed, t);
            let train = cfg.density.sample(cfg.n, &mut rng);
            let index = build_index(PointSet::new(&train), IndexStrategy::Auto);

            let inliers = cfg.density.sample(cfg.in_probes, &mut rng);
            let mut out_values = Vec::with_capacity(cfg.out_probes * d);
            for _ in 0..cfg.out_probes {
                out_values
                    .extend(cfg.density.support().sample_at_distance(&mut rng, cfg.outlier_margin));
            }
            let outliers = matrix_from_rows(out_values, cfg.out_probes, d);

            let r_in = knn_radius_batch(&index, &inliers, cfg.k)?;
            let r_out = knn_radius_batch(&index, &outliers, cfg.k)?;

            let mut rows = Vec::with_capacity(3);
            let min_out = r_out.iter().copied().fold(f64::INFINITY, f64::min);
            rows.push(TrialRow {
                trial: t,
                check: "outlier_recall",
                pass: min_out >= thresholds.radius,
                value: min_out,
            });

            let mut worst_flagged_density = 0.0f64;
            for (radii, probes) in [(&r_in, &inliers), (&r_out, &outliers)] {
                for (i, r) in radii.iter().enumerate() {
                    if *r >= thresholds.radius {
                        worst_flagged_density =
                            worst_flagged_density.max(cfg.density.value(probes.row(i)));
                    }
                }
            }
            rows.push(TrialRow {
                trial: t,
                check: "flagged_low_density",
                pass: worst_flagged_density <= thresholds.density_level,
                value: worst_flagged_density,
            });

            if let Some(bound) = alarm_bound {
                let rate = r_in.iter().filter(|r| **r >= thresholds.radius).count() as f64
                    / cfg.in_probes as f64;
                rows.push(TrialRow {
                    trial: t,
                    check: "false_alarm",
                    pass: rate <= bound,
                    value: rate,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let mut report = TrialReport::new("flagging");
    report.push_summary("family", cfg.density.family().name());
    report.push_summary("dim", d.to_string());
    report.push_summary("n", cfg.n.to_string());
    report.push_summary("k", cfg.k.to_string());
    report.push_summary_f64("delta", cfg.delta);
    report.push_summary("trials", cfg.trials.to_string());
    report.push_summary("in_probes", cfg.in_probes.to_string());
    report.push_summary("out_probes", cfg.out_probes.to_string());
    report.push_summary_f64("outlier_margin", cfg.outlier_margin);
    report.push_summary("seed", cfg.seed.to_string());
    report.push_summary_f64("radius_threshold", thresholds.radius);
    report.push_summary_f64("density_level", thresholds.density_level);
    match alarm_bound {
        Some(bound) => report.push_summary_f64("false_alarm_bound", bound),
        None => report.push_summary("false_alarm_bound", "unavailable"),
    }
    report.push_summary_f64("k_floor", k_floor);
    report.push_summary("k_floor_satisfied", (cfg.k as f64 >= k_floor).to_string());
    for rows in per_trial {
        report.extend_rows(rows);
    }
    for check in ["outlier_recall", "flagged_low_density", "false_alarm"] {
        if let Some(rate) = report.pass_rate(check) {
            report.push_summary_f64(&format!("pass_rate_{check}"), rate);
        }
    }
    Ok(report)
}

/// Configuration for [`run_ranking_trial`].
#[derive(Debug, Clone)]
pub struct RankingConfig {
    pub density: SyntheticDensity,
    pub n: usize,
    pub k: usize,
    /// Required true-density gap between the two probes of a pair.
    pub gap: f64,
    pub pairs: usize,
    /// Grid-size request for the density sup-error; in more than one
    /// dimension the per-axis count is the d-th root, rounded up.
    pub grid_points: usize,
    pub seed: u64,
}

impl RankingConfig {
    fn validate(&self) -> Result<(), LabError> {
        require(self.n >= 1, || "need at least one training point".to_owned())?;
        require(self.k >= 1 && self.k <= self.n, || {
            format!("k must be in 1..={}, got {}", self.n, self.k)
        })?;
        require(self.gap > 0.0 && self.gap.is_finite(), || {
            format!("density gap must be positive, got {}", self.gap)
        })?;
        require(self.pairs >= 1, || "need at least one probe pair".to_owned())?;
        require(self.grid_points >= 2, || "need at least two grid points".to_owned())
    }
}

/// Checks that a density gap forces radius order: probe pairs with
/// `f(x1) >= f(x2) + gap` should come back with `r_k(x1) < r_k(x2)`.
/// One row per pair records the strict comparison and the radius
/// margin; the summary reports the preserved fraction and the
/// sup-norm error of the k-NN density estimate over an evaluation
/// grid. Pair candidates are drawn from the support's bounding box
/// inflated by 10% per side, so some pairs compare an interior point
/// against an outright outlier.
pub fn run_ranking_trial(cfg: &RankingConfig) -> Result<TrialReport, LabError> {
    cfg.validate()?;
    let d = cfg.density.dim();
    let v_d = unit_ball_volume(d);
    let mut rng = trial_rng(cfg.seed, 0);
    let train = cfg.density.sample(cfg.n, &mut rng);
    let index = build_index(PointSet::new(&train), IndexStrategy::Auto);

    let (lo, hi) = cfg.density.support().bounding_box();
    let pads: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.1 * (h - l)).collect();
    let draw_candidate = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter()
            .zip(&hi)
            .zip(&pads)
            .map(|((l, h), p)| rng.random_range(l - p..h + p))
            .collect()
    };

    let max_attempts = cfg.pairs.saturating_mul(10_000);
    let mut dense_rows = Vec::with_capacity(cfg.pairs * d);
    let mut sparse_rows = Vec::with_capacity(cfg.pairs * d);
    let mut found = 0usize;
    let mut attempts = 0usize;
    while found < cfg.pairs && attempts < max_attempts {
        attempts += 1;
        let a = draw_candidate(&mut rng);
        let b = draw_candidate(&mut rng);
        let (fa, fb) = (cfg.density.value(&a), cfg.density.value(&b));
        let (denser, sparser, f_hi, f_lo) =
            if fa >= fb { (a, b, fa, fb) } else { (b, a, fb, fa) };
        if f_hi - f_lo >= cfg.gap {
            dense_rows.extend(denser);
            sparse_rows.extend(sparser);
            found += 1;
        }
    }
    require(found == cfg.pairs, || {
        format!(
            "found only {found} of {} probe pairs with density gap >= {} after {max_attempts} attempts",
            cfg.pairs, cfg.gap
        )
    })?;

    let denser = matrix_from_rows(dense_rows, cfg.pairs, d);
    let sparser = matrix_from_rows(sparse_rows, cfg.pairs, d);
    let r_dense = knn_radius_batch(&index, &denser, cfg.k)?;
    let r_sparse = knn_radius_batch(&index, &sparser, cfg.k)?;

    let mut report = TrialReport::new("ranking");
    report.push_summary("family", cfg.density.family().name());
    report.push_summary("dim", d.to_string());
    report.push_summary("n", cfg.n.to_string());
    report.push_summary("k", cfg.k.to_string());
    report.push_summary_f64("gap", cfg.gap);
    report.push_summary("pairs", cfg.pairs.to_string());
    report.push_summary("pair_attempts", attempts.to_string());
    report.push_summary("seed", cfg.seed.to_string());

    for (i, (rd, rs)) in r_dense.iter().zip(&r_sparse).enumerate() {
        report.push_row(i, "rank_preserved", rd < rs, rs - rd);
    }

    // Sup-norm error of the k-NN density estimate over an inclusive
    // tensor grid spanning the support's bounding box.
    let per_axis = if d == 1 {
        cfg.grid_points
    } else {
        ((cfg.grid_points as f64).powf(1.0 / d as f64).ceil() as usize).max(2)
    };
    let mut sup_error = 0.0f64;
    let mut grid_used = 0usize;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    'grid: loop {
        for j in 0..d {
            x[j] = lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (per_axis - 1) as f64;
        }
        let estimate = knn_density(&index, &x, cfg.k, v_d)?;
        sup_error = sup_error.max((estimate - cfg.density.value(&x)).abs());
        grid_used += 1;
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == d {
                break 'grid;
            }
        }
    }
    report.push_summary("grid_points_requested", cfg.grid_points.to_string());
    report.push_summary("grid_points_used", grid_used.to_string());
    report.push_summary_f64(
        "preserved_fraction",
        report.pass_rate("rank_preserved").expect("pairs >= 1"),
    );
    report.push_summary_f64("sup_error", sup_error);
    Ok(report)
}

/// Configuration for [`run_contraction_trial`].
#[derive(Debug, Clone)]
pub struct ContractionConfig {
    pub support: Support,
    /// Interior anchor the inside branch of the map scales toward.
    pub anchor: Vec<f64>,
    pub gamma_in: f64,
    pub gamma_out: f64,
    /// Exact distance of every outside probe from the support.
    pub r_min: f64,
    /// Lower bound on the fraction of a small boundary ball's volume
    /// inside the support.
    pub c0: f64,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub pairs: usize,
    /// Probes per class for the separability comparison.
    pub auc_probes: usize,
    pub seed: u64,
}

impl ContractionConfig {
    fn validate(&self) -> Result<(), LabError> {
        require(self.anchor.len() == self.support.dim(), || {
            format!(
                "anchor has {} coordinates for a {}-dimensional support",
                self.anchor.len(),
                self.support.dim()
            )
        })?;
        require(self.support.strictly_inside(&self.anchor), || {
            "anchor must lie strictly inside the support".to_owned()
        })?;
        require(
            self.gamma_in > 0.0 && self.gamma_in < self.gamma_out && self.gamma_out < 1.0,
            || {
                format!(
                    "need 0 < gamma_in < gamma_out < 1, got {} and {}",
                    self.gamma_in, self.gamma_out
                )
            },
        )?;
        require(self.r_min > 0.0 && self.r_min.is_finite(), || {
            format!("r_min must be positive, got {}", self.r_min)
        })?;
        require(self.c0 > 0.0 && self.c0 <= 1.0, || {
            format!("c0 must be in (0, 1], got {}", self.c0)
        })?;
        require(self.n >= 1, || "need at least one training point".to_owned())?;
        require(self.k >= 1 && self.k <= self.n, || {
            format!("k must be in 1..={}, got {}", self.n, self.k)
        })?;
        require(self.trials >= 1, || "need at least one trial".to_owned())?;
        require(self.pairs >= 1, || "need at least one probe pair".to_owned())?;
        require(self.auc_probes >= 1, || "need at least one probe per class".to_owned())
    }
}

/// Checks that the piecewise scaling map strictly improves the
/// outlier-to-inlier radius ratio, pair by pair, and does not hurt
/// nearest-neighbor separability. Per trial: a uniform dataset is
/// drawn and indexed before and after mapping, each probe pair
/// (inlier uniform in the support, outlier at distance exactly
/// `r_min`) gets a `ratio_increases` row, and one AUC triple of rows
/// compares the nearest-neighbor radius score on fresh probe batches
/// before and after the map.
pub fn run_contraction_trial(cfg: &ContractionConfig) -> Result<TrialReport, LabError> {
    cfg.validate()?;
    let d = cfg.support.dim();
    let ceiling = contraction_k_ceiling(cfg.c0, d, cfg.gamma_in, cfg.gamma_out, cfg.r_min, cfg.n);
    let apply = |x: &[f64]| contraction_map(&cfg.support, &cfg.anchor, cfg.gamma_in, cfg.gamma_out, x);
    let map_matrix = |m: &EmbeddingMatrix| {
        let mut mapped = Vec::with_capacity(m.n() * d);
        for i in 0..m.n() {
            mapped.extend(apply(m.row(i)));
        }
        matrix_from_rows(mapped, m.n(), d)
    };

    struct TrialOut {
        rows: Vec<TrialRow>,
        auc_before: f64,
        auc_after: f64,
    }

    let per_trial: Vec<TrialOut> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialOut, LabError> {
            let mut rng = trial_rng(cfg.seed, t);
            let mut train_rows = Vec::with_capacity(cfg.n * d);
            for _ in 0..cfg.n {
                train_rows.extend(cfg.support.sample_uniform(&mut rng));
            }
            let train = matrix_from_rows(train_rows, cfg.n, d);
            let mapped_train = map_matrix(&train);
            let before = build_index(PointSet::new(&train), IndexStrategy::Auto);
            let after = build_index(PointSet::new(&mapped_train), IndexStrategy::Auto);

            let mut in_rows = Vec::with_capacity(cfg.pairs * d);
            let mut out_rows = Vec::with_capacity(cfg.pairs * d);
            for _ in 0..cfg.pairs {
                in_rows.extend(cfg.support.sample_uniform(&mut rng));
                out_rows.extend(cfg.support.sample_at_distance(&mut rng, cfg.r_min));
            }
            let inliers = matrix_from_rows(in_rows, cfg.pairs, d);
            let outliers = matrix_from_rows(out_rows, cfg.pairs, d);

            let r_in_before = knn_radius_batch(&before, &inliers, cfg.k)?;
            let r_out_before = knn_radius_batch(&before, &outliers, cfg.k)?;
            let r_in_after = knn_radius_batch(&after, &map_matrix(&inliers), cfg.k)?;
            let r_out_after = knn_radius_batch(&after, &map_matrix(&outliers), cfg.k)?;

            let mut rows = Vec::with_capacity(cfg.pairs + 3);
            for i in 0..cfg.pairs {
                let ratio_before = r_out_before[i] / r_in_before[i];
                let ratio_after = r_out_after[i] / r_in_after[i];
                rows.push(TrialRow {
                    trial: t,
                    check: "ratio_increases",
                    pass: ratio_after > ratio_before,
                    value: ratio_after - ratio_before,
                });
            }

            // Separability of the nearest-neighbor radius score on
            // fresh probes, before and after the map.
            let mut in_rows = Vec::with_capacity(cfg.auc_probes * d);
            let mut out_rows = Vec::with_capacity(cfg.auc_probes * d);
            for _ in 0..cfg.auc_probes {
                in_rows.extend(cfg.support.sample_uniform(&mut rng));
                out_rows.extend(cfg.support.sample_at_distance(&mut rng, cfg.r_min));
            }
            let auc_in = matrix_from_rows(in_rows, cfg.auc_probes, d);
            let auc_out = matrix_from_rows(out_rows, cfg.auc_probes, d);
            let score = |index: &KnnIndex<'_>, probes: &EmbeddingMatrix| {
                knn_radius_batch(index, probes, 1)
            };
            let auc_before = roc_auc(&LabeledScores::new(
                score(&before, &auc_in)?,
                score(&before, &auc_out)?,
            )?)?;
            let auc_after = roc_auc(&LabeledScores::new(
                score(&after, &map_matrix(&auc_in))?,
                score(&after, &map_matrix(&auc_out))?,
            )?)?;
            rows.push(TrialRow { trial: t, check: "auc_before", pass: true, value: auc_before });
            rows.push(TrialRow { trial: t, check: "auc_after", pass: true, value: auc_after });
            rows.push(TrialRow {
                trial: t,
                check: "auc_not_worse",
                pass: auc_after >= auc_before,
                value: auc_after - auc_before,
            });
            Ok(TrialOut { rows, auc_before, auc_after })
        })
        .collect::<Result<_, _>>()?;

    let mut report = TrialReport::new("contraction");
    report.push_summary("support", support_kind(&cfg.support));
    report.push_summary("dim", d.to_string());
    report.push_summary_f64("gamma_in", cfg.gamma_in);
    report.push_summary_f64("gamma_out", cfg.gamma_out);
    report.push_summary_f64("r_min", cfg.r_min);
    report.push_summary_f64("c0", cfg.c0);
    report.push_summary("n", cfg.n.to_string());
    report.push_summary("k", cfg.k.to_string());
    report.push_summary("trials", cfg.trials.to_string());
    report.push_summary("pairs", cfg.pairs.to_string());
    report.push_summary("auc_probes", cfg.auc_probes.to_string());
    report.push_summary("seed", cfg.seed.to_string());
    report.push_summary_f64("k_ceiling", ceiling);
    report.push_summary("k_within_ceiling", (cfg.k as f64 <= ceiling).to_string());
    let trials_f = cfg.trials as f64;
    let mean_before = per_trial.iter().map(|t| t.auc_before).sum::<f64>() / trials_f;
    let mean_after = per_trial.iter().map(|t| t.auc_after).sum::<f64>() / trials_f;
    for out in per_trial {
        report.extend_rows(out.rows);
    }
    report.push_summary_f64("mean_auc_before", mean_before);
    report.push_summary_f64("mean_auc_after", mean_after);
    for check in ["ratio_increases", "auc_not_worse"] {
        if let Some(rate) = report.pass_rate(check) {
            report.push_summary_f64(&format!("pass_rate_{check}"), rate);
        }
    }
    Ok(report)
}

/// Configuration for [`ball_mass_check`].
#[derive(Debug, Clone)]
pub struct BallMassConfig {
    pub density: SyntheticDensity,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub trials: usize,
    /// Random balls examined per trial.
    pub balls: usize,
    pub seed: u64,
}

impl BallMassConfig {
    fn validate(&self) -> Result<(), LabError> {
        require(self.density.has_closed_form_ball_mass(), || {
            format!(
                "no closed-form ball mass for the {} family in dimension {}",
                self.density.family(),
                self.density.dim()
            )
        })?;
        require(self.n >= 1, || "need at least one training point".to_owned())?;
        require(self.k >= 1 && self.k <= self.n, || {
            format!("k must be in 1..={}, got {}", self.n, self.k)
        })?;
        let floor = self.density.dim() as f64 * (self.n as f64).ln();
        require(self.k as f64 >= floor, || {
            format!(
                "the count envelopes require k >= d ln n = {floor:.3}, got k = {}",
                self.k
            )
        })?;
        require(self.delta > 0.0 && self.delta < 1.0, || {
            format!("delta must be in (0, 1), got {}", self.delta)
        })?;
        require(self.trials >= 1, || "need at least one trial".to_owned())?;
        require(self.balls >= 1, || "need at least one ball".to_owned())
    }
}

/// Spot-checks the count concentration that underpins every radius
/// bound: for random balls with exactly known mass `F`, (1) mass
/// above the visibility threshold forces a nonzero sample count,
/// (2) mass above `k/n` plus its deviation forces a count of at
/// least `k`, and (3) mass below `k/n` minus its deviation keeps the
/// count under `k`. One row per ball records whether every triggered
/// implication held; the summary reports how many implications were
/// triggered and violated.
pub fn ball_mass_check(cfg: &BallMassConfig) -> Result<TrialReport, LabError> {
    cfg.validate()?;
    let d = cfg.density.dim();
    let coeff = concentration_coefficient(cfg.delta, d, cfg.n);
    let nf = cfg.n as f64;
    let kf = cfg.k as f64;
    let positive_count_threshold = coeff * (d as f64 * nf.ln()).sqrt() / nf;
    let reach_k_threshold = kf / nf + coeff * kf.sqrt() / nf;
    let stay_below_k_threshold = kf / nf - coeff * kf.sqrt() / nf;

    let (lo, hi) = cfg.density.support().bounding_box();
    let extent = cfg.density.support().max_extent();

    struct TrialOut {
        rows: Vec<TrialRow>,
        triggered: usize,
        violated: usize,
    }

    let per_trial: Vec<TrialOut> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialOut, LabError> {
            let mut rng = trial_rng(cfg.seed, t);
            let train = cfg.density.sample(cfg.n, &mut rng);
            let mut rows = Vec::with_capacity(cfg.balls);
            let mut triggered = 0usize;
            let mut violated = 0usize;
            for _ in 0..cfg.balls {
                let center: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| {
                        let pad = 0.25 * (h - l);
                        rng.random_range(l - pad..h + pad)
                    })
                    .collect();
                let radius = rng.random_range(1e-3 * extent..extent);
                let mass = cfg.density.ball_mass(&center, radius)?;
                let r2 = radius * radius;
                let count = (0..cfg.n)
                    .filter(|&i| {
                        let row = train.row(i);
                        let d2: f64 =
                            row.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                        d2 <= r2
                    })
                    .count();

                let mut ball_ok = true;
                let mut check = |premise: bool, conclusion: bool| {
                    if premise {
                        triggered += 1;
                        if !conclusion {
                            violated += 1;
                            ball_ok = false;
                        }
                    }
                };
                check(mass >= positive_count_threshold, count > 0);
                check(mass >= reach_k_threshold, count >= cfg.k);
                check(mass <= stay_below_k_threshold, count < cfg.k);
                rows.push(TrialRow {
                    trial: t,
                    check: "count_within_envelope",
                    pass: ball_ok,
                    value: mass,
                });
            }
            Ok(TrialOut { rows, triggered, violated })
        })
        .collect::<Result<_, _>>()?;

    let mut report = TrialReport::new("ball_mass");
    report.push_summary("family", cfg.density.family().name());
    report.push_summary("dim", d.to_string());
    report.push_summary("n", cfg.n.to_string());
    report.push_summary("k", cfg.k.to_string());
    report.push_summary_f64("delta", cfg.delta);
    report.push_summary("trials", cfg.trials.to_string());
    report.push_summary("balls", cfg.balls.to_string());
    report.push_summary("seed", cfg.seed.to_string());
    report.push_summary_f64("coefficient", coeff);
    report.push_summary_f64("positive_count_threshold", positive_count_threshold);
    report.push_summary_f64("reach_k_threshold", reach_k_threshold);
    report.push_summary_f64("stay_below_k_threshold", stay_below_k_threshold);
    let mut triggered = 0usize;
    let mut violated = 0usize;
    for out in per_trial {
        triggered += out.triggered;
        violated += out.violated;
        report.extend_rows(out.rows);
    }
    report.push_summary("implications_triggered", triggered.to_string());
    report.push_summary("implications_violated", violated.to_string());
    report.push_summary_f64(
        "violation_rate",
        if triggered == 0 { 0.0 } else { violated as f64 / triggered as f64 },
    );
    report.push_summary_f64(
        "pass_rate_count_within_envelope",
        report.pass_rate("count_within_envelope").expect("balls >= 1"),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::knn_radius;

    fn small_flagging_config() -> FlaggingConfig {
        FlaggingConfig {
            density: SyntheticDensity::triangular_1d(),
            n: 3000,
            k: 60,
            delta: 0.2,
            trials: 3,
            in_probes: 40,
            out_probes: 8,
            outlier_margin: 0.1,
            seed: 5,
        }
    }

    #[test]
    fn flagging_report_structure_and_determinism() {
        let cfg = small_flagging_config();
        let report = run_flagging_trial(&cfg).unwrap();
        assert_eq!(report.kind(), "flagging");
        assert_eq!(report.rows().len(), 3 * 3);
        assert_eq!(report.summary_value("k_floor_satisfied"), Some("false"));
        assert!(report.summary_value("radius_threshold").is_some());
        // The outlier margin dwarfs the radius threshold here, so
        // recall holds in every trial.
        assert_eq!(report.pass_rate("outlier_recall"), Some(1.0));
        assert_eq!(report.to_csv(), run_flagging_trial(&cfg).unwrap().to_csv());
    }

    #[test]
    fn flagging_rejects_bad_configs() {
        let mut cfg = small_flagging_config();
        cfg.delta = 1.0;
        assert!(matches!(run_flagging_trial(&cfg), Err(LabError::InvalidConfig(_))));
        let mut cfg = small_flagging_config();
        cfg.k = 0;
        assert!(matches!(run_flagging_trial(&cfg), Err(LabError::InvalidConfig(_))));
        let mut cfg = small_flagging_config();
        cfg.density = SyntheticDensity::uniform_box(vec![0.0], vec![1.0]).unwrap();
        // No smoothness constants on the uniform family.
        assert!(matches!(run_flagging_trial(&cfg), Err(LabError::InvalidConfig(_))));
    }

    #[test]
    fn density_peak_is_not_flagged() {
        let cfg = small_flagging_config();
        let mut rng = trial_rng(cfg.seed, 0);
        let train = cfg.density.sample(cfg.n, &mut rng);
        let index = build_index(PointSet::new(&train), IndexStrategy::Auto);
        let r_peak = knn_radius(&index, &[0.5], cfg.k).unwrap().radius;
        let smooth = cfg.density.smoothness().unwrap();
        let thresholds = flag_thresholds(smooth.c_beta, smooth.beta, 1, cfg.n, cfg.k);
        assert!(r_peak < thresholds.radius);
    }

    #[test]
    fn ranking_report_structure_and_determinism() {
        let cfg = RankingConfig {
            density: SyntheticDensity::triangular_1d(),
            n: 2000,
            k: 205,
            gap: 0.5,
            pairs: 40,
            grid_points: 101,
            seed: 9,
        };
        let report = run_ranking_trial(&cfg).unwrap();
        assert_eq!(report.kind(), "ranking");
        assert_eq!(report.rows_for("rank_preserved").count(), 40);
        let preserved: f64 = report.summary_value("preserved_fraction").unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&preserved));
        assert!(preserved >= 0.9, "preserved fraction {preserved}");
        let sup: f64 = report.summary_value("sup_error").unwrap().parse().unwrap();
        assert!(sup > 0.0 && sup < 2.0, "sup error {sup}");
        assert_eq!(report.summary_value("grid_points_used"), Some("101"));
        assert_eq!(report.to_csv(), run_ranking_trial(&cfg).unwrap().to_csv());
    }

    #[test]
    fn ranking_rejects_unattainable_gaps() {
        let cfg = RankingConfig {
            density: SyntheticDensity::triangular_1d(),
            n: 50,
            k: 5,
            gap: 10.0,
            pairs: 2,
            grid_points: 11,
            seed: 1,
        };
        match run_ranking_trial(&cfg) {
            Err(LabError::InvalidConfig(msg)) => assert!(msg.contains("probe pairs")),
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    fn small_contraction_config() -> ContractionConfig {
        ContractionConfig {
            support: Support::unit_ball(2).unwrap(),
            anchor: vec![0.0, 0.0],
            gamma_in: 0.5,
            gamma_out: 0.8,
            r_min: 0.5,
            c0: 0.25,
            n: 3000,
            k: 1,
            trials: 2,
            pairs: 40,
            auc_probes: 60,
            seed: 11,
        }
    }

    #[test]
    fn contraction_report_structure_and_determinism() {
        let cfg = small_contraction_config();
        let report = run_contraction_trial(&cfg).unwrap();
        assert_eq!(report.kind(), "contraction");
        assert_eq!(report.rows_for("ratio_increases").count(), 80);
        assert_eq!(report.rows_for("auc_not_worse").count(), 2);
        assert_eq!(report.summary_value("k_within_ceiling"), Some("true"));
        assert_eq!(report.pass_rate("ratio_increases"), Some(1.0));
        assert_eq!(report.pass_rate("auc_not_worse"), Some(1.0));
        assert_eq!(report.to_csv(), run_contraction_trial(&cfg).unwrap().to_csv());
    }

    #[test]
    fn contraction_rejects_bad_gammas_and_anchors() {
        let mut cfg = small_contraction_config();
        cfg.gamma_in = 0.8;
        cfg.gamma_out = 0.5;
        assert!(matches!(run_contraction_trial(&cfg), Err(LabError::InvalidConfig(_))));
        let mut cfg = small_contraction_config();
        cfg.gamma_in = cfg.gamma_out;
        assert!(matches!(run_contraction_trial(&cfg), Err(LabError::InvalidConfig(_))));
        let mut cfg = small_contraction_config();
        cfg.anchor = vec![2.0, 0.0];
        assert!(matches!(run_contraction_trial(&cfg), Err(LabError::InvalidConfig(_))));
    }

    fn small_ball_mass_config() -> BallMassConfig {
        BallMassConfig {
            density: SyntheticDensity::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            n: 4000,
            k: 70,
            delta: 0.2,
            trials: 1,
            balls: 60,
            seed: 13,
        }
    }

    #[test]
    fn ball_mass_report_structure_and_determinism() {
        let cfg = small_ball_mass_config();
        let report = ball_mass_check(&cfg).unwrap();
        assert_eq!(report.kind(), "ball_mass");
        assert_eq!(report.rows().len(), 60);
        let triggered: usize =
            report.summary_value("implications_triggered").unwrap().parse().unwrap();
        assert!(triggered > 0, "no implication ever triggered");
        assert_eq!(report.summary_value("implications_violated"), Some("0"));
        assert!(report.all_passed());
        assert_eq!(report.to_csv(), ball_mass_check(&cfg).unwrap().to_csv());
    }

    #[test]
    fn ball_mass_rejects_small_k_and_missing_closed_forms() {
        let mut cfg = small_ball_mass_config();
        cfg.k = 5;
        // d ln n is about 16.6 here.
        match ball_mass_check(&cfg) {
            Err(LabError::InvalidConfig(msg)) => assert!(msg.contains("k >= d ln n")),
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
        let mut cfg = small_ball_mass_config();
        cfg.density = SyntheticDensity::uniform_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
        cfg.k = 200;
        assert!(matches!(ball_mass_check(&cfg), Err(LabError::InvalidConfig(_))));
    }

    #[test]
    fn trial_seeds_differ_by_index() {
        let a = trial_rng(42, 0).random::<u64>();
        let b = trial_rng(42, 1).random::<u64>();
        let c = trial_rng(43, 0).random::<u64>();
        assert_ne!(a, b);
        assert_eq!(b, c);
    }
}
