use std::path::PathBuf;
use std::process::ExitCode;

use alphax_cli::{backtest, synth, validate, CliError, RunConfig};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alphax", version, about = "Point-in-time fundamentals backtester")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the input files and report coverage.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run strategies and write ledgers, equity curves and metrics.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of alphax,rsi,stochastic,mfi,selic,nibov.
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set forest.n_trees=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Generate a deterministic synthetic dataset.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        assets: usize,
        #[arg(long, default_value_t = 18)]
        quarters: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write into a non-empty directory.
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config, &[])?;
            let report = validate(&cfg)?;
            print!("{}", report.render());
            if !report.violations.is_empty() {
                return Err(CliError::Invalid(report.violations.len()));
            }
        }
        Command::Backtest { config, strategies, from, to, seed, out, overrides } => {
            let mut cfg = RunConfig::load(&config, &overrides)?;
            cfg.apply_flags(strategies.as_deref(), from, to, seed, out)?;
            let outcome = backtest(&cfg)?;
            for run in &outcome.runs {
                println!("{}: final equity {:.2}, {} trades", run.strategy, run.final_equity(), run.ledger.len());
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Synth { seed, assets, quarters, out, force } => {
            synth(seed, assets, quarters, &out, force)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
