mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rescaviar::Variant;

use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "rescaviar", version, about = "Joint VaR/ES forecasting with realized volatility and overnight returns")]
struct Cli {
    /// TOML file with [data], [model], [mcmc], [rolling], [bootstrap], [murphy] and [simulate] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every stochastic step
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summary statistics of r, oc and rv
    Summarize(SummarizeArgs),
    /// Posterior sample on the in-sample window
    Fit(FitArgs),
    /// One-step-ahead rolling forecasts over the out-of-sample window
    Forecast(ForecastArgs),
    /// Coverage tests, scores and Murphy curves for forecast files
    Backtest(BacktestArgs),
    /// Murphy curves and, for two inputs, dominance tests
    Murphy(MurphyArgs),
    /// Rank models from a criteria CSV
    Rank(RankArgs),
    /// Simulate a market from known parameters
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct SummarizeArgs {
    /// Market CSV files; defaults to [data] input
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// es-caviar, res-caviar, es-caviar-oc, res-caviar-oc-minus or res-caviar-oc
    #[arg(long, value_parser = parse_variant)]
    pub model: Option<Variant>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Clone)]
pub struct McmcArgs {
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Row count or last in-sample date; fits on all rows when absent
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Largest lag written to acf.csv
    #[arg(long, default_value_t = 50)]
    pub acf_lags: usize,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Row count or last in-sample date
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Refit every this many out-of-sample days
    #[arg(long)]
    pub refit_interval: Option<usize>,
    /// Use a rolling estimation window of this length instead of an expanding one
    #[arg(long)]
    pub window_length: Option<usize>,
    #[arg(long)]
    pub no_warm_start: bool,
}

#[derive(Args)]
pub struct BacktestArgs {
    /// Forecast CSVs, one per model
    #[arg(long, num_args = 1.., required = true)]
    pub forecasts: Vec<PathBuf>,
    /// Market label written to criteria.csv
    #[arg(long)]
    pub market: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Args)]
pub struct MurphyArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub forecasts: Vec<PathBuf>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Mean block length of the stationary bootstrap
    #[arg(long)]
    pub block: Option<f64>,
}

#[derive(Args)]
pub struct RankArgs {
    /// CSV with market,model,alpha,vrate,es_measure,quantile_score,al_log_score
    /// and optional coverage_rejections, esr_rejections columns
    #[arg(long)]
    pub criteria: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of days
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub es0: Option<f64>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: rescaviar::Error| e.to_string())
}

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<rescaviar::Error>(),
                Some(
                    rescaviar::Error::MissingColumn(_)
                        | rescaviar::Error::InvalidArgument(_)
                        | rescaviar::Error::Dimension { .. }
                )
            )
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let ctx = commands::Context {
        seed: cli.seed.or(cfg.seed),
        out: cli.out,
        cfg,
    };
    match cli.command {
        Command::Summarize(a) => commands::summarize(&ctx, a),
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Forecast(a) => commands::forecast(&ctx, a),
        Command::Backtest(a) => commands::backtest(&ctx, a),
        Command::Murphy(a) => commands::murphy(&ctx, a),
        Command::Rank(a) => commands::rank(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
