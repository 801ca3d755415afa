//! Implementations behind the subcommands: file plumbing, banner
//! printing, and exit-code classification around the library calls.

use std::fs;
use std::path::{Path, PathBuf};

use knnood_core::fmt::g17;
use knnood_core::lab::{
    ball_mass_check, run_contraction_trial, run_flagging_trial, run_ranking_trial, BallMassConfig,
    ContractionConfig, FlaggingConfig, LabError, RankingConfig, Support, SyntheticDensity,
    TrialReport,
};
use knnood_core::{
    load_matrix, pr_at_threshold, radius_histogram, roc_auc, score_stack, HistogramSpec, KnnError,
    LabeledScores, LayerStack, MetricsError, ScoreError,
};

use crate::{
    BallmassArgs, ContractionArgs, EvalArgs, FamilyArg, HistArgs, RankingArgs, ScoreArgs,
    SupportArg, T1Args,
};

/// Failures sorted by exit code: `Usage` exits 2, `Degenerate` exits 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Degenerate(String),
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Knn(KnnError::ZeroRadius) => CliError::Degenerate(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        if e.is_degenerate() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Prints the full resolved configuration to stderr, one line per run.
fn banner(command: &str, threads: usize, pairs: &[(&str, String)]) {
    let mut line = format!("[config] command={command} threads={threads}");
    for (key, value) in pairs {
        line.push_str(&format!(" {key}={value}"));
    }
    eprintln!("{line}");
}

/// Writes `body` to `out` (or stdout when absent) and the one-line
/// summary to whichever of stdout/stderr the body does not occupy.
fn emit(out: &Option<PathBuf>, body: &str, summary: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, body).map_err(|e| file_error(path, e))?;
            println!("{summary}");
        }
        None => {
            print!("{body}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn path_list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
}

fn opt_f64(value: &Option<f64>) -> String {
    value.map_or_else(|| "none".to_owned(), |v| v.to_string())
}

fn opt_path(value: &Option<PathBuf>) -> String {
    value.as_ref().map_or_else(|| "stdout".to_owned(), |p| p.display().to_string())
}

/// One score per line; blank lines and `#` comments are skipped.
fn read_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let mut scores = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            file_error(path, format!("line {}: {line:?} is not a number", index + 1))
        })?;
        scores.push(value);
    }
    Ok(scores)
}

fn load_stack(paths: &[PathBuf], side: &str) -> Result<LayerStack, CliError> {
    let mut layers = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let matrix = load_matrix(path)
            .map_err(|e| CliError::Usage(format!("{side} layer {i} ({}): {e}", path.display())))?;
        layers.push(matrix);
    }
    LayerStack::new(layers).map_err(|e| CliError::Usage(format!("{side} layers: {e}")))
}

/// Reads a summary value the report is known to carry and re-renders
/// numbers in their shortest form for the one-line summary.
fn summary_value(report: &TrialReport, key: &str) -> String {
    let raw = report.summary_value(key).unwrap_or("missing");
    match raw.parse::<f64>() {
        Ok(v) => v.to_string(),
        Err(_) => raw.to_owned(),
    }
}

pub fn run_score(args: &ScoreArgs, threads: usize) -> Result<(), CliError> {
    banner(
        "score",
        threads,
        &[
            ("train", path_list(&args.train)),
            ("query", path_list(&args.query)),
            ("k", args.k.to_string()),
            ("threshold", opt_f64(&args.threshold)),
            ("out", opt_path(&args.out)),
        ],
    );
    if args.train.len() != args.query.len() {
        return Err(CliError::Usage(format!(
            "got {} training layers but {} query layers",
            args.train.len(),
            args.query.len()
        )));
    }
    let train = load_stack(&args.train, "train")?;
    let queries = load_stack(&args.query, "query")?;
    let card = score_stack(&train, &queries, args.k, args.threshold)?;

    let lo = card.aggregate.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = card.aggregate.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut summary = format!(
        "scored {} queries across {} layers with k={}; aggregate in [{lo}, {hi}]",
        card.query_count(),
        card.layer_count(),
        card.k
    );
    if let Some(verdicts) = &card.verdicts {
        let flagged = verdicts.iter().filter(|&&v| v).count();
        summary.push_str(&format!("; flagged {flagged}/{}", verdicts.len()));
    }
    emit(&args.out, &card.to_csv(), &summary)
}

pub fn run_eval(args: &EvalArgs, threads: usize) -> Result<(), CliError> {
    banner(
        "eval",
        threads,
        &[
            ("in_scores", args.in_scores.display().to_string()),
            ("out_scores", args.out_scores.display().to_string()),
            ("threshold", opt_f64(&args.threshold)),
            ("out", opt_path(&args.out)),
        ],
    );
    let scores = LabeledScores::new(
        read_scores(&args.in_scores)?,
        read_scores(&args.out_scores)?,
    )?;
    let auc = roc_auc(&scores)?;
    let mut body = String::from("metric,value\n");
    body.push_str(&format!("auc,{}\n", g17(auc)));
    let mut summary = format!("auc {auc}");
    if let Some(t) = args.threshold {
        let report = pr_at_threshold(&scores, t)?;
        body.push_str(&format!("recall,{}\n", g17(report.recall)));
        body.push_str(&format!("false_alarm,{}\n", g17(report.false_alarm)));
        summary.push_str(&format!(
            "; at threshold {t}: recall {}, false alarm {}",
            report.recall, report.false_alarm
        ));
    }
    emit(&args.out, &body, &summary)
}

pub fn run_hist(args: &HistArgs, threads: usize) -> Result<(), CliError> {
    banner(
        "hist",
        threads,
        &[
            ("in_scores", args.in_scores.display().to_string()),
            ("out_scores", args.out_scores.display().to_string()),
            ("bins", args.bins.to_string()),
            (
                "range",
                args.range
                    .map_or_else(|| "auto".to_owned(), |r| format!("{},{}", r.lo, r.hi)),
            ),
            ("out", opt_path(&args.out)),
        ],
    );
    let in_values = read_scores(&args.in_scores)?;
    let out_values = read_scores(&args.out_scores)?;
    let spec = HistogramSpec { bins: args.bins, range: args.range.map(|r| (r.lo, r.hi)) };
    let hist = radius_histogram(&in_values, &out_values, &spec)?;
    let summary = format!(
        "{} bins over [{}, {}]; {} in-distribution values, {} out-of-distribution",
        hist.bins(),
        hist.edges[0],
        hist.edges[hist.bins()],
        in_values.len(),
        out_values.len()
    );
    emit(&args.out, &hist.to_csv(), &summary)
}

fn build_density(family: FamilyArg, dim: usize) -> Result<SyntheticDensity, CliError> {
    match family {
        FamilyArg::Triangular1d => {
            if dim != 1 {
                return Err(CliError::Usage(format!(
                    "the triangular-1d family is one-dimensional, got --dim {dim}"
                )));
            }
            Ok(SyntheticDensity::triangular_1d())
        }
        FamilyArg::UniformBall => Ok(SyntheticDensity::uniform_ball(vec![0.0; dim], 1.0)?),
        FamilyArg::UniformBox => {
            Ok(SyntheticDensity::uniform_box(vec![0.0; dim], vec![1.0; dim])?)
        }
        FamilyArg::TaperBox => Ok(SyntheticDensity::taper_box(vec![0.0; dim], vec![1.0; dim])?),
    }
}

pub fn run_synth_t1(args: &T1Args, threads: usize) -> Result<(), CliError> {
    let density = build_density(args.family, args.dim)?;
    banner(
        "synth-t1",
        threads,
        &[
            ("family", density.family().name().to_owned()),
            ("dim", args.dim.to_string()),
            ("n", args.n.to_string()),
            ("k", args.k.to_string()),
            ("delta", args.delta.to_string()),
            ("trials", args.trials.to_string()),
            ("in_probes", args.in_probes.to_string()),
            ("out_probes", args.out_probes.to_string()),
            ("outlier_margin", args.outlier_margin.to_string()),
            ("seed", args.seed.to_string()),
            ("out", opt_path(&args.out)),
        ],
    );
    let report = run_flagging_trial(&FlaggingConfig {
        density,
        n: args.n,
        k: args.k,
        delta: args.delta,
        trials: args.trials,
        in_probes: args.in_probes,
        out_probes: args.out_probes,
        outlier_margin: args.outlier_margin,
        seed: args.seed,
    })?;
    let summary = format!(
        "flagging: outlier_recall {} | flagged_low_density {} | false_alarm {} | k_floor_satisfied {}",
        summary_value(&report, "pass_rate_outlier_recall"),
        summary_value(&report, "pass_rate_flagged_low_density"),
        summary_value(&report, "pass_rate_false_alarm"),
        summary_value(&report, "k_floor_satisfied"),
    );
    emit(&args.out, &report.to_csv(), &summary)
}

pub fn run_synth_ranking(args: &RankingArgs, threads: usize) -> Result<(), CliError> {
    let density = build_density(args.family, args.dim)?;
    let k = args.k.unwrap_or_else(|| (args.n as f64).powf(0.7).ceil() as usize);
    banner(
        "synth-ranking",
        threads,
        &[
            ("family", density.family().name().to_owned()),
            ("dim", args.dim.to_string()),
            ("n", args.n.to_string()),
            ("k", k.to_string()),
            ("gap", args.gap.to_string()),
            ("pairs", args.pairs.to_string()),
            ("grid_points", args.grid_points.to_string()),
            ("seed", args.seed.to_string()),
            ("out", opt_path(&args.out)),
        ],
    );
    let report = run_ranking_trial(&RankingConfig {
        density,
        n: args.n,
        k,
        gap: args.gap,
        pairs: args.pairs,
        grid_points: args.grid_points,
        seed: args.seed,
    })?;
    let summary = format!(
        "ranking: preserved_fraction {} | sup_error {}",
        summary_value(&report, "preserved_fraction"),
        summary_value(&report, "sup_error"),
    );
    emit(&args.out, &report.to_csv(), &summary)
}

pub fn run_synth_contraction(args: &ContractionArgs, threads: usize) -> Result<(), CliError> {
    let (support, anchor) = match args.support {
        SupportArg::Ball => (
            Support::unit_ball(args.dim).map_err(CliError::from)?,
            vec![0.0; args.dim],
        ),
        SupportArg::Box => (
            Support::unit_box(args.dim).map_err(CliError::from)?,
            vec![0.5; args.dim],
        ),
    };
    let c0 = args.c0.unwrap_or_else(|| 2f64.powi(-(args.dim as i32)));
    banner(
        "synth-contraction",
        threads,
        &[
            ("support", format!("{:?}", args.support).to_lowercase()),
            ("dim", args.dim.to_string()),
            ("gamma_in", args.gamma_in.to_string()),
            ("gamma_out", args.gamma_out.to_string()),
            ("r_min", args.r_min.to_string()),
            ("c0", c0.to_string()),
            ("n", args.n.to_string()),
            ("k", args.k.to_string()),
            ("trials", args.trials.to_string()),
            ("pairs", args.pairs.to_string()),
            ("auc_probes", args.auc_probes.to_string()),
            ("seed", args.seed.to_string()),
            ("out", opt_path(&args.out)),
        ],
    );
    let report = run_contraction_trial(&ContractionConfig {
        support,
        anchor,
        gamma_in: args.gamma_in,
        gamma_out: args.gamma_out,
        r_min: args.r_min,
        c0,
        n: args.n,
        k: args.k,
        trials: args.trials,
        pairs: args.pairs,
        auc_probes: args.auc_probes,
        seed: args.seed,
    })?;
    let summary = format!(
        "contraction: ratio_increases {} | mean_auc {} -> {} | k_within_ceiling {}",
        summary_value(&report, "pass_rate_ratio_increases"),
        summary_value(&report, "mean_auc_before"),
        summary_value(&report, "mean_auc_after"),
        summary_value(&report, "k_within_ceiling"),
    );
    emit(&args.out, &report.to_csv(), &summary)
}

pub fn run_synth_ballmass(args: &BallmassArgs, threads: usize) -> Result<(), CliError> {
    let density = build_density(args.family, args.dim)?;
    banner(
        "synth-ballmass",
        threads,
        &[
            ("family", density.family().name().to_owned()),
            ("dim", args.dim.to_string()),
            ("n", args.n.to_string()),
            ("k", args.k.to_string()),
            ("delta", args.delta.to_string()),
            ("trials", args.trials.to_string()),
            ("balls", args.balls.to_string()),
            ("seed", args.seed.to_string()),
            ("out", opt_path(&args.out)),
        ],
    );
    let report = ball_mass_check(&BallMassConfig {
        density,
        n: args.n,
        k: args.k,
        delta: args.delta,
        trials: args.trials,
        balls: args.balls,
        seed: args.seed,
    })?;
    let summary = format!(
        "ball_mass: triggered {} | violated {} | violation_rate {}",
        summary_value(&report, "implications_triggered"),
        summary_value(&report, "implications_violated"),
        summary_value(&report, "violation_rate"),
    );
    emit(&args.out, &report.to_csv(), &summary)
}
