use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "capput", version)]
#[command(about = "Perpetual American put capped by the first drawdown epoch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price one state and print the value breakdown
    Price(PriceArgs),
    /// Optimal exercise barrier and the derived constants
    Barrier(BarrierArgs),
    /// Price a grid of states or parameters as long-format CSV
    Sweep(SweepArgs),
    /// Run the numerical verification suite
    Verify(VerifyArgs),
    /// Monte Carlo estimate next to the closed form
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Key-value config file. Keys mirror the long flag names; flags win
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Risk-free rate r > 0 [default: 0.1]
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Volatility σ > 0 [default: 0.2]
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Strike K > 0 [default: 100]
    #[arg(long, allow_negative_numbers = true)]
    pub strike: Option<f64>,
    /// Drawdown ratio e^c > 1 [default: 1.2]
    #[arg(long, allow_negative_numbers = true)]
    pub drawdown: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    /// Current spot price e^x
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Running maximum price e^x̄
    #[arg(long, allow_negative_numbers = true)]
    pub xbar: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write to this file instead of stdout
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Number of paths [default: 200000]
    #[arg(long)]
    pub paths: Option<u64>,
    /// Time step [default: 1e-4]
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Truncation horizon [default: e^{-r t_max} < 1e-4]
    #[arg(long, allow_negative_numbers = true)]
    pub tmax: Option<f64>,
    /// Base seed of the per-path streams [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BarrierArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Preset grid: 1 spot slice, 2 spot by running max, 3 and 4 rate by volatility
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub figure: Option<u8>,
    /// Spot grid LO:HI:N in prices
    #[arg(long = "x-grid", value_name = "LO:HI:N")]
    pub x_grid: Option<String>,
    /// Running-maximum grid LO:HI:N in prices
    #[arg(long = "xbar-grid", value_name = "LO:HI:N")]
    pub xbar_grid: Option<String>,
    /// Rate grid LO:HI:N
    #[arg(long = "r-grid", value_name = "LO:HI:N")]
    pub r_grid: Option<String>,
    /// Volatility grid LO:HI:N
    #[arg(long = "sigma-grid", value_name = "LO:HI:N")]
    pub sigma_grid: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Shift the exercise barrier by DELTA in log-price
    #[arg(long = "perturb-astar", value_name = "DELTA", allow_negative_numbers = true)]
    pub perturb_astar: Option<f64>,
    /// Also compare against Monte Carlo at one state per regime
    #[arg(long = "with-mc")]
    pub with_mc: bool,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Coarsening strides sharing the fine paths, e.g. 1,2,4
    #[arg(long, value_delimiter = ',')]
    pub strides: Option<Vec<u64>>,
    /// Exercise at this fixed price instead of e^{a*}
    #[arg(long = "exercise-at", value_name = "PRICE", allow_negative_numbers = true)]
    pub exercise_at: Option<f64>,
    /// Never exercise before the drawdown epoch
    #[arg(long = "drawdown-only", conflicts_with = "exercise_at")]
    pub drawdown_only: bool,
}
