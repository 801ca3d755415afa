//! `knnood`: score embeddings by k-NN radius, evaluate the scores,
//! and run the Monte-Carlo checkers for the finite-sample guarantees.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "knnood",
    version,
    about = "Out-of-distribution scoring over precomputed embeddings via k-NN radii",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for batch queries and trials; 0 uses all cores.
    /// Output is identical for every thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score query embeddings against training embeddings, layer by
    /// layer, writing a scorecard CSV.
    Score(ScoreArgs),
    /// Compare in- and out-of-distribution score files: ROC-AUC and
    /// optional threshold metrics, as metric,value CSV rows.
    Eval(EvalArgs),
    /// Export per-class histograms of two score files as CSV.
    Hist(HistArgs),
    /// Monte-Carlo checkers pitting measured k-NN radii against
    /// closed-form finite-sample thresholds.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct ScoreArgs {
    /// Training-layer files in layer order (.emb or .csv), one per layer.
    #[arg(long, required = true, num_args = 1..)]
    train: Vec<PathBuf>,

    /// Query-layer files matching the training layers in order and count.
    #[arg(long, required = true, num_args = 1..)]
    query: Vec<PathBuf>,

    /// Neighbors per radius query, shared by all layers.
    #[arg(long, default_value_t = 1)]
    k: usize,

    /// Verdict threshold on the aggregate score; omit to report
    /// scores without verdicts.
    #[arg(long)]
    threshold: Option<f64>,

    /// Scorecard CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// In-distribution scores, one number per line.
    #[arg(long = "in-scores")]
    in_scores: PathBuf,

    /// Out-of-distribution scores, one number per line.
    #[arg(long = "out-scores")]
    out_scores: PathBuf,

    /// Also report recall and false-alarm rate at this threshold.
    #[arg(long)]
    threshold: Option<f64>,

    /// Metrics CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    /// In-distribution scores, one number per line.
    #[arg(long = "in-scores")]
    in_scores: PathBuf,

    /// Out-of-distribution scores, one number per line.
    #[arg(long = "out-scores")]
    out_scores: PathBuf,

    /// Number of equal-width bins.
    #[arg(long, default_value_t = 40)]
    bins: usize,

    /// Fixed range as "lo,hi"; spans the pooled data when omitted.
    #[arg(long, value_parser = parse_range)]
    range: Option<RangeArg>,

    /// Histogram CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct RangeArg {
    lo: f64,
    hi: f64,
}

fn parse_range(text: &str) -> Result<RangeArg, String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected \"lo,hi\", got {text:?}"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("{:?} is not a number", s.trim()))
    };
    Ok(RangeArg { lo: parse(lo)?, hi: parse(hi)? })
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Flagging checker: outliers must cross the radius threshold,
    /// and everything crossing it must sit at low density.
    T1(T1Args),
    /// Ranking checker: a density gap must order the radii.
    Ranking(RankingArgs),
    /// Contraction checker: piecewise scaling toward the support must
    /// widen the outlier-to-inlier radius ratio.
    Contraction(ContractionArgs),
    /// Ball-mass checker: sample counts in balls of known mass must
    /// stay inside their concentration envelopes.
    Ballmass(BallmassArgs),
}

/// Synthetic density family for the checkers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    /// Tent density 4*min(x, 1-x) on [0, 1]; dimension must be 1.
    #[value(name = "triangular-1d")]
    Triangular1d,
    /// Uniform on the unit ball centered at the origin.
    #[value(name = "uniform-ball")]
    UniformBall,
    /// Uniform on the unit cube [0, 1]^d.
    #[value(name = "uniform-box")]
    UniformBox,
    /// Product of per-axis tents on the unit cube [0, 1]^d.
    #[value(name = "taper-box")]
    TaperBox,
}

#[derive(Args)]
struct T1Args {
    /// Density family; must carry smoothness constants
    /// (triangular-1d or taper-box).
    #[arg(long, value_enum, default_value_t = FamilyArg::Triangular1d)]
    family: FamilyArg,

    /// Support dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,

    /// Training points per trial.
    #[arg(long, default_value_t = 50_000)]
    n: usize,

    /// Neighbors per radius query.
    #[arg(long, default_value_t = 1_000)]
    k: usize,

    /// Confidence parameter of the thresholds.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,

    /// Independent dataset draws.
    #[arg(long, default_value_t = 200)]
    trials: usize,

    /// In-distribution probes per trial.
    #[arg(long = "in-probes", default_value_t = 200)]
    in_probes: usize,

    /// Outlier probes per trial.
    #[arg(long = "out-probes", default_value_t = 20)]
    out_probes: usize,

    /// Distance of every outlier probe from the support.
    #[arg(long = "outlier-margin", default_value_t = 0.05)]
    outlier_margin: f64,

    /// Root seed; trial t uses seed + t.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Report CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankingArgs {
    /// Density family the probe pairs are measured against.
    #[arg(long, value_enum, default_value_t = FamilyArg::Triangular1d)]
    family: FamilyArg,

    /// Support dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,

    /// Training points.
    #[arg(long, default_value_t = 100_000)]
    n: usize,

    /// Neighbors per radius query; defaults to ceil(n^0.7).
    #[arg(long)]
    k: Option<usize>,

    /// Required true-density gap within each probe pair.
    #[arg(long, default_value_t = 0.5)]
    gap: f64,

    /// Probe pairs to draw.
    #[arg(long, default_value_t = 500)]
    pairs: usize,

    /// Grid-size request for the density sup-error.
    #[arg(long = "grid-points", default_value_t = 201)]
    grid_points: usize,

    /// Root seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Report CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Support shape for the contraction checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SupportArg {
    /// Unit ball centered at the origin.
    Ball,
    /// Unit cube [0, 1]^d.
    Box,
}

#[derive(Args)]
struct ContractionArgs {
    /// Support the uniform data is drawn from.
    #[arg(long, value_enum, default_value_t = SupportArg::Ball)]
    support: SupportArg,

    /// Support dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// Scaling factor applied inside the support.
    #[arg(long = "gamma-in", default_value_t = 0.5)]
    gamma_in: f64,

    /// Scaling factor applied outside, relative to the boundary
    /// projection; must exceed gamma-in and stay below 1.
    #[arg(long = "gamma-out", default_value_t = 0.8)]
    gamma_out: f64,

    /// Distance of every outlier probe from the support.
    #[arg(long = "r-min", default_value_t = 0.5)]
    r_min: f64,

    /// Interior volume fraction of small boundary balls; defaults
    /// to 2^-d.
    #[arg(long)]
    c0: Option<f64>,

    /// Training points per trial.
    #[arg(long, default_value_t = 20_000)]
    n: usize,

    /// Neighbors per radius query.
    #[arg(long, default_value_t = 1)]
    k: usize,

    /// Independent dataset draws.
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Probe pairs per trial.
    #[arg(long, default_value_t = 500)]
    pairs: usize,

    /// Probes per class for the separability comparison.
    #[arg(long = "auc-probes", default_value_t = 200)]
    auc_probes: usize,

    /// Root seed; trial t uses seed + t.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Report CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BallmassArgs {
    /// Density family; needs a closed-form ball mass.
    #[arg(long, value_enum, default_value_t = FamilyArg::UniformBox)]
    family: FamilyArg,

    /// Support dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// Training points per trial.
    #[arg(long, default_value_t = 100_000)]
    n: usize,

    /// Count threshold; must be at least d ln n.
    #[arg(long, default_value_t = 200)]
    k: usize,

    /// Confidence parameter of the envelopes.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,

    /// Independent dataset draws.
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Random balls per trial.
    #[arg(long, default_value_t = 1_000)]
    balls: usize,

    /// Root seed; trial t uses seed + t.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Report CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Ignore failure: the global pool can only be set once, which
        // matters only under in-process test harnesses.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let result = match cli.command {
        Command::Score(args) => commands::run_score(&args, cli.threads),
        Command::Eval(args) => commands::run_eval(&args, cli.threads),
        Command::Hist(args) => commands::run_hist(&args, cli.threads),
        Command::Synth(synth) => match synth {
            SynthCommand::T1(args) => commands::run_synth_t1(&args, cli.threads),
            SynthCommand::Ranking(args) => commands::run_synth_ranking(&args, cli.threads),
            SynthCommand::Contraction(args) => {
                commands::run_synth_contraction(&args, cli.threads)
            }
            SynthCommand::Ballmass(args) => commands::run_synth_ballmass(&args, cli.threads),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Degenerate(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
