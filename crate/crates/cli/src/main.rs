//! `sphrank`: sampling, estimation, efficiency tables, simulations and data
//! analysis for rotationally symmetric distributions on the sphere.
//!
//! Exit codes: 0 success, 1 I/O or replay mismatch, 2 invalid input,
//! 3 numerical failure, 4 no sign change in the cross-information search.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sphrank::estimators::Classical;
use sphrank::io::DatasetFormat;
use sphrank::AngularModel;

#[derive(Debug, Parser)]
#[command(name = "sphrank", version, about = "Rank-based location estimation on the unit sphere")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from a rotationally symmetric model.
    Sample(SampleArgs),
    /// Estimate the location of a dataset.
    Estimate(EstimateArgs),
    /// Tabulate asymptotic relative efficiencies on the standard grid.
    AreTable(AreTableArgs),
    /// Run a Monte Carlo mean-squared-error experiment.
    Mse(MseArgs),
    /// Full analysis of a real dataset with FVML-score R-estimators.
    Analyze(AnalyzeArgs),
    /// Re-run a command from its manifest and verify outputs are identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Angular model, e.g. fvml:2, lin:4, logis:2,1.
    #[arg(long)]
    pub model: AngularModel,
    /// Dimension; defaults to the length of --theta.
    #[arg(long)]
    pub k: Option<usize>,
    /// Location, comma separated; normalized. Defaults to the first basis vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mean,
    Median,
    OnestepR,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// vectors-csv or decinc-csv.
    #[arg(long, default_value = "vectors-csv")]
    pub format: DatasetFormat,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Score model for onestep-r.
    #[arg(long)]
    pub score: Option<AngularModel>,
    #[arg(long, default_value = "mean")]
    pub preliminary: Classical,
    /// JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct AreTableArgs {
    #[arg(long)]
    pub reference: Classical,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Output format; text is an aligned four-decimal table.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Report path; `.json` gives JSON, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the full-scale replicate count.
    #[arg(long, conflicts_with = "replicates")]
    pub full_scale: bool,
    /// Override the configured replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "decinc-csv")]
    pub format: DatasetFormat,
    #[arg(long)]
    pub k: Option<usize>,
    /// FVML concentrations for the scores; `mle` uses the fitted value.
    #[arg(long, value_delimiter = ',', default_value = "20,50,200,mle")]
    pub kappas: Vec<String>,
    #[arg(long, default_value = "median")]
    pub preliminary: Classical,
    /// JSON report; a CSV summary is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the cosines to the preliminary estimate.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::run(cli.command, &argv, true) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
