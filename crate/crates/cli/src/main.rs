//! `crowdbin`: fit count bins, build balanced schedules, score the bin loss
//! and evaluate predictions from plain CSV/JSON-lines files.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "crowdbin", version, about, long_about = None)]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "CROWDBIN_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count-range binning.
    #[command(subcommand)]
    Bins(BinsCommand),
    /// Per-epoch balanced minibatch schedules.
    Schedule(ScheduleArgs),
    /// Bin loss of a prediction file.
    Loss(LossArgs),
    /// Per-bin, pooled and global statistics plus TPER (and GAME with points).
    Eval(EvalArgs),
    /// TPER curve as plot-ready CSV.
    Tper(TperArgs),
    /// Grid average mean absolute error over point annotations.
    Game(GameArgs),
}

#[derive(Debug, Subcommand)]
pub enum BinsCommand {
    /// Fit MAP bins to a counts file.
    Fit(BinsFitArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Multinomial,
    Poisson,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HeldOutArg {
    /// Plug-in probabilities from the held-out counts.
    Test,
    /// Probabilities from the smoothed train counts.
    Train,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    /// Round-robin over bins.
    Rr,
    /// Random non-empty bin per step.
    Rs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Debug, Args, Serialize)]
pub struct BinsFitArgs {
    /// Counts file (`image_id,count` CSV or JSON lines).
    #[arg(long)]
    pub counts: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output bins JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Prior parameter γ in (0, 1). Ignored with --grid-search.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Upper bound on the number of bins [default: distinct counts after smoothing].
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Additive smoothing added to every count in [0, max].
    #[arg(long, default_value_t = 1)]
    pub beta: u64,
    #[arg(long, value_enum, default_value_t = ModelArg::Multinomial)]
    pub model: ModelArg,
    /// Choose γ by cross-validated grid search.
    #[arg(long)]
    pub grid_search: bool,
    /// Grid of γ candidates.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
    pub gammas: Vec<f64>,
    /// Held-out fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.25])]
    pub ratios: Vec<f64>,
    /// Shuffles per (γ, ratio) cell.
    #[arg(long, default_value_t = 10)]
    pub repeats: u64,
    /// Source of held-out bin probabilities.
    #[arg(long, value_enum, default_value_t = HeldOutArg::Test)]
    pub held_out_probs: HeldOutArg,
    /// Dataset name recorded in the output metadata.
    #[arg(long)]
    pub dataset_id: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Bins JSON from `bins fit`.
    #[arg(long)]
    pub bins: PathBuf,
    /// Output CSV (`epoch,step,batch,image_id,bin_index`).
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Rr)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: u64,
    /// Fail on counts above the last bin instead of clamping them into it.
    #[arg(long)]
    pub strict_range: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    /// Predictions file (`image_id,gt_count,pred_count`).
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub bins: PathBuf,
    /// Per-record CSV; the reduced value goes to stdout and the sidecar.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Weight of the in-bin logarithmic branch.
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    /// Weight of the bin loss next to the model loss.
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, value_enum, default_value_t = ReductionArg::Mean)]
    pub reduction: ReductionArg,
}

#[derive(Debug, Args, Serialize)]
pub struct TperFlags {
    /// TPER thresholds (multiples of the ground truth), ascending.
    #[arg(long, value_delimiter = ',', default_values_t = crowdbin::metrics::default_thetas())]
    pub thetas: Vec<f64>,
    /// Do not count exact predictions as exceeding any threshold.
    #[arg(long)]
    pub tper_skip_exact: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub bins: PathBuf,
    /// Point annotations (JSON lines); adds GAME to the report.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Output report JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the TPER curve as CSV.
    #[arg(long)]
    pub tper_csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tper: TperFlags,
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 1, 2, 3])]
    pub game_levels: Vec<u32>,
    /// Use the n-1 standard deviation instead of the population one.
    #[arg(long)]
    pub sample_std: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TperArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output CSV (`theta,tper`).
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub tper: TperFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct GameArgs {
    /// Point annotations (JSON lines).
    #[arg(long)]
    pub points: PathBuf,
    /// Output JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 1, 2, 3])]
    pub levels: Vec<u32>,
    /// Include per-image values.
    #[arg(long)]
    pub per_image: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
