//! `cevmm`: preprocessing, simulation, fitting, model selection and risk
//! reporting for changepoint extreme value mixture models.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cevmm", version, about = "Changepoint extreme value mixture models")]
struct Cli {
    /// Base random seed; chain `c` of a fit uses `seed + c`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON pipeline configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs [default: out].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transform a price or return series.
    Preprocess(PreprocessArgs),
    /// Draw a synthetic series with known parameters.
    Simulate(SimulateArgs),
    /// Fit a model with one or more MCMC chains.
    Fit(FitArgs),
    /// Compare fitted models by BIC, DIC and WAIC.
    Select(SelectArgs),
    /// Posterior return levels, VaR and expected shortfall per regime.
    Risk(RiskArgs),
    /// Count VaR violations per regime.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Value column; defaults to x, value, close, adj close, price or return.
    #[arg(long)]
    column: Option<String>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated steps: returns, log-returns, abs, negate, blockmax:<m>.
    #[arg(long)]
    steps: Option<String>,
    /// Output CSV [default: <out-dir>/preprocessed.csv].
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Design {
    ThreeRegime,
    SingleRegime,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON file with the generating parameters.
    #[arg(long, conflicts_with = "design")]
    truth: Option<PathBuf>,
    /// Built-in reference design.
    #[arg(long, value_enum)]
    design: Option<Design>,
    /// Series length.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Bulk mixture: cmgpd (Gamma) or cmnpd (Normal).
    #[arg(long, value_parser = commands::parse_kind)]
    kind: Option<cevmm::dists::BulkKind>,
    /// Number of regimes.
    #[arg(long)]
    k: Option<usize>,
    /// Number of bulk mixture components.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Keep the initial proposal scales.
    #[arg(long)]
    no_adapt: bool,
    /// Exit successfully even when some R-hat exceeds 1.1.
    #[arg(long)]
    allow_unconverged: bool,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Chain tables, each with its diagnostics JSON alongside.
    #[arg(required = true)]
    chains: Vec<PathBuf>,
    /// Output CSV [default: <out-dir>/selection.csv].
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RiskArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Chain table to summarize.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Return periods [default: 25 log-spaced values from 10 to 1000].
    #[arg(long, value_delimiter = ',')]
    return_periods: Option<Vec<f64>>,
    /// VaR tail probabilities, e.g. 0.05,0.01.
    #[arg(long, value_delimiter = ',')]
    var: Option<Vec<f64>>,
    /// Expected shortfall tail probabilities.
    #[arg(long, value_delimiter = ',')]
    es: Option<Vec<f64>>,
    /// Add Normal-fit VaR and ES (safety factor 3) per regime.
    #[arg(long)]
    normfit: bool,
    /// Also backtest VaR at this tail probability.
    #[arg(long)]
    backtest: Option<f64>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Tail probability of the VaR being tested.
    #[arg(long)]
    p: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let ctx = commands::Context {
        seed: cli.seed.or(cfg.seed),
        out_dir: cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        quiet: cli.quiet || cfg.quiet.unwrap_or(false),
    };
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&ctx, &cfg, a),
        Command::Simulate(a) => commands::simulate(&ctx, &cfg, a),
        Command::Fit(a) => commands::fit(&ctx, &cfg, a),
        Command::Select(a) => commands::select(&ctx, &cfg, a),
        Command::Risk(a) => commands::risk(&ctx, &cfg, a),
        Command::Backtest(a) => commands::backtest(&ctx, &cfg, a),
    }
}

fn main() -> ExitCode {
    // Clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
