//! `arqoe` — analysis toolkit for image quality-of-experience studies.
//!
//! Subcommands cover the full workflow: scoring image quality
//! (`brisque`), opinion-score tables (`scores`), correlation tables
//! (`correlate`), exponential quality-decay fitting (`iqx`), the
//! two-stage prediction evaluation (`predict`), and the synthetic
//! dataset generator (`synth`).
//!
//! Every command is deterministic for identical inputs and seeds, and
//! exits with 0 on success, 1 on validation failures, and 2 on I/O or
//! parse failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arqoe_core::pipeline::{Grouping, Method, Source, Target};
use arqoe_core::regress::DEFAULT_LAMBDA;

mod commands;

#[derive(Parser)]
#[command(name = "arqoe", version, about = "Image quality-of-experience analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score an image's no-reference quality (higher = more impaired).
    Brisque(BrisqueArgs),
    /// Compute mean and differential opinion scores from ratings.
    Scores(ScoresArgs),
    /// Print rating correlations against level and quality value.
    Correlate(CorrelateArgs),
    /// Fit the exponential quality-decay curve to opinion scores.
    Iqx(IqxArgs),
    /// Run the two-stage repeated-split prediction evaluation.
    Predict(PredictArgs),
    /// Generate a synthetic experiment dataset from a JSON config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BrisqueArgs {
    /// PNG or JPEG image to score.
    image: PathBuf,
    /// SVR model file; defaults to the bundled pretrained model.
    #[arg(long, requires = "range")]
    model: Option<PathBuf>,
    /// Feature scaling range file; defaults to the bundled one.
    #[arg(long, requires = "model")]
    range: Option<PathBuf>,
    /// Print the 36 raw features as one CSV line instead of the score.
    #[arg(long)]
    features: bool,
}

#[derive(Args)]
struct ScoresArgs {
    /// Ratings CSV (subject_id,image_id,level,rating,t_start_ms).
    ratings: PathBuf,
    /// Output table path.
    #[arg(long, default_value = "mos_dmos.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Ratings CSV (subject_id,image_id,level,rating,t_start_ms).
    ratings: PathBuf,
    /// Quality-table CSV (image_id,level,brisque).
    brisque: PathBuf,
    /// Correlate differential ratings (crushed against each subject's
    /// level-0 reference) instead of raw ratings.
    #[arg(long)]
    differential: bool,
}

#[derive(Args)]
struct IqxArgs {
    /// Ratings CSV (subject_id,image_id,level,rating,t_start_ms).
    ratings: PathBuf,
    /// Quality-table CSV (image_id,level,brisque).
    brisque: PathBuf,
    /// Output path for the sampled fitted curve.
    #[arg(long, default_value = "iqx_curve.csv")]
    out: PathBuf,
    /// Number of curve samples to write.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Brisque,
    Eeg,
    Eegz,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Rating,
    Level,
    Brisque,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum MethodArg {
    Linear,
    BoundLinear,
    Logistic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum GroupArg {
    All,
    PerImage,
    PerSubject,
}

impl From<SourceArg> for Source {
    fn from(value: SourceArg) -> Self {
        match value {
            SourceArg::Brisque => Source::Brisque,
            SourceArg::Eeg => Source::Eeg,
            SourceArg::Eegz => Source::Eegz,
        }
    }
}

impl From<TargetArg> for Target {
    fn from(value: TargetArg) -> Self {
        match value {
            TargetArg::Rating => Target::Rating,
            TargetArg::Level => Target::Level,
            TargetArg::Brisque => Target::Brisque,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Linear => Method::Linear,
            MethodArg::BoundLinear => Method::BoundLinear,
            MethodArg::Logistic => Method::Logistic,
        }
    }
}

impl From<GroupArg> for Grouping {
    fn from(value: GroupArg) -> Self {
        match value {
            GroupArg::All => Grouping::All,
            GroupArg::PerImage => Grouping::PerImage,
            GroupArg::PerSubject => Grouping::PerSubject,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Ratings CSV (subject_id,image_id,level,rating,t_start_ms).
    ratings: PathBuf,
    /// Quality-table CSV (image_id,level,brisque).
    brisque: PathBuf,
    /// Directory of per-subject EEG traces named <subject_id>.csv;
    /// required for the eeg and eegz sources.
    #[arg(long)]
    eeg_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "brisque")]
    source: SourceArg,
    #[arg(long, value_enum, default_value = "rating")]
    target: TargetArg,
    #[arg(long, value_enum, default_value = "linear")]
    method: MethodArg,
    /// Polynomial degree of the feature expansion (1–3).
    #[arg(long, default_value_t = 1)]
    degree: u32,
    #[arg(long, value_enum, default_value = "all")]
    group: GroupArg,
    /// Master seed; falls back to $QOE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// L2 strength of the logistic fit.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Override the stage-one minimum run count.
    #[arg(long)]
    stage1_min: Option<u32>,
    /// Override the stage-one maximum run count.
    #[arg(long)]
    stage1_max: Option<u32>,
    /// Override the stage-two minimum run count.
    #[arg(long)]
    stage2_min: Option<u32>,
    /// Override the stage-two maximum run count.
    #[arg(long)]
    stage2_max: Option<u32>,
    /// Worker threads for pipeline runs (default: all cores). Results
    /// are identical for any worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Report the summary MedAE as the mean of per-run medians instead
    /// of the median over pooled residuals (the JSON always carries the
    /// pooled value).
    #[arg(long)]
    per_run_medae: bool,
    /// Directory for report.json, summary.csv, and scatter files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration (JSON; `{}` selects all defaults).
    config: PathBuf,
    /// Directory for ratings.csv, brisque.csv, and eeg/<subject>.csv.
    out_dir: PathBuf,
}

/// Validation failures exit 1; I/O and parse failures exit 2.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<arqoe_core::CoreError>() {
            use arqoe_core::CoreError::*;
            return match core {
                Io { .. } | Csv { .. } | Ingest { .. } => 2,
                _ => 1,
            };
        }
        if let Some(brisque) = cause.downcast_ref::<brisque::BrisqueError>() {
            use brisque::BrisqueError::*;
            return match brisque {
                Io { .. } | Parse { .. } | Decode { .. } => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Brisque(args) => commands::brisque(args),
        Command::Scores(args) => commands::scores(args),
        Command::Correlate(args) => commands::correlate(args),
        Command::Iqx(args) => commands::iqx(args),
        Command::Predict(args) => commands::predict(args),
        Command::Synth(args) => commands::synth(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
