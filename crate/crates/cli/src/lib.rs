//! Pipeline orchestration for the `rqvol` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod simulate;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rqvol::model_builder::Target;

use commands::Output;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rqvol", version, about = "Realized measures, conditional quantile models and backtests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration file.
    #[arg(long, global = true, default_value = "rqvol.ini")]
    pub config: PathBuf,
    /// Overrides `seeds.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `paths.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Daily realized measures and returns from tick data.
    Measures,
    /// Quantile regressions for returns, with block-bootstrap inference.
    FitReturns,
    /// Quantile regressions for realized volatility.
    FitRv,
    /// CAViaR models for returns.
    FitCaviar,
    /// ARFIMA model for log realized variance.
    FitArfima,
    /// Quantile forecasts from the last available day.
    Forecast,
    /// Rolling out-of-sample evaluation.
    Backtest,
    /// 30-day model-free implied volatility from option quotes.
    Impvol,
    /// Synthetic input data.
    Simulate,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plot: bool,
}

/// Loads the configuration and applies command-line overrides.
pub fn load_config(path: &Path, opts: &Options) -> CliResult<RunConfig> {
    if !path.is_file() {
        return Err(CliError::Config(format!("config file not found: {}", path.display())));
    }
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(o) = &opts.out {
        cfg.paths.output = o.clone();
    }
    Ok(cfg)
}

/// Runs one subcommand; returns the files written.
pub fn run_with_config(command: Command, cfg: &RunConfig, plot: bool) -> CliResult<Vec<PathBuf>> {
    let mut out = Output::new(&cfg.paths.output)?;
    match command {
        Command::Measures => commands::cmd_measures(cfg, &mut out)?,
        Command::FitReturns => commands::cmd_fit_lqr(cfg, Target::Return, plot, &mut out)?,
        Command::FitRv => commands::cmd_fit_lqr(cfg, Target::RvSqrt, plot, &mut out)?,
        Command::FitCaviar => commands::cmd_fit_caviar(cfg, plot, &mut out)?,
        Command::FitArfima => commands::cmd_fit_arfima(cfg, &mut out)?,
        Command::Forecast => commands::cmd_forecast(cfg, &mut out)?,
        Command::Backtest => {
            commands::cmd_backtest(cfg, plot, &mut out)?;
        }
        Command::Impvol => {
            commands::cmd_impvol(cfg, plot, &mut out)?;
        }
        Command::Simulate => commands::cmd_simulate(cfg, &mut out)?,
    }
    out.write("effective_config.ini", cfg.to_ini())?;
    Ok(out.written)
}

pub fn run(command: Command, config: &Path, opts: &Options) -> CliResult<Vec<PathBuf>> {
    let cfg = load_config(config, opts)?;
    run_with_config(command, &cfg, opts.plot)
}
