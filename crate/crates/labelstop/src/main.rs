use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use labelstop::cli::{cmd_report, cmd_run, cmd_simulate, cmd_sweep, CliError};
use labelstop::config::{load_config, ConfigError, Overrides};

#[derive(Parser)]
#[command(
    name = "labelstop",
    about = "Cost-aware stopping for label acquisition: run, sweep and score stopping rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count override.
    #[arg(long)]
    parallel: Option<usize>,
    /// Single cost value override.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// One synthetic trace with a per-step table.
    Simulate(CommonArgs),
    /// Cross-validated runs at one cost value.
    Run(CommonArgs),
    /// Cross-validated runs over the whole cost grid.
    Sweep(CommonArgs),
    /// Recompute the summary from stored records.
    Report {
        /// Directory of record files.
        records_dir: PathBuf,
        /// Where to write summary.csv (prints to stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir_for(args: &CommonArgs, config: &labelstop::config::ExperimentConfig) -> Result<PathBuf, CliError> {
    args.out
        .clone()
        .or_else(|| config.run.out_dir.clone())
        .ok_or_else(|| {
            CliError::Config(ConfigError::Invalid {
                path: "run.out_dir".to_string(),
                message: "set run.out_dir in the config or pass --out".to_string(),
            })
        })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let config = load_config(&args.config, &overrides_of(&args))?;
            let out = out_dir_for(&args, &config)?;
            let result = cmd_simulate(&config, &out)?;
            println!(
                "stopped at t={} ({:?}), realized cost {}",
                result.stopping_time, result.stop_reason, result.realized_cost
            );
            println!("record: {}", result.record_path.display());
            println!("table:  {}", result.table_path.display());
        }
        Command::Run(args) => {
            let config = load_config(&args.config, &overrides_of(&args))?;
            let out = out_dir_for(&args, &config)?;
            let result = cmd_run(&config, &out)?;
            println!(
                "{} runs x {} cost value(s), {} records",
                result.runs,
                result.gammas,
                result.record_paths.len()
            );
            println!("summary: {}", result.summary_path.display());
        }
        Command::Sweep(args) => {
            let config = load_config(&args.config, &overrides_of(&args))?;
            let out = out_dir_for(&args, &config)?;
            let result = cmd_sweep(&config, &out)?;
            println!(
                "{} runs x {} cost value(s), {} records",
                result.runs,
                result.gammas,
                result.record_paths.len()
            );
            println!("summary: {}", result.summary_path.display());
        }
        Command::Report { records_dir, out } => {
            let result = cmd_report(&records_dir, out.as_deref())?;
            for (path, reason) in &result.skipped {
                eprintln!("skipped {}: {}", path.display(), reason);
            }
            match &result.summary_path {
                Some(path) => println!(
                    "{} records -> {}",
                    result.records_used,
                    path.display()
                ),
                None => print!("{}", result.table),
            }
        }
    }
    Ok(())
}

fn overrides_of(args: &CommonArgs) -> Overrides {
    Overrides {
        out: args.out.clone(),
        seed: args.seed,
        parallel: args.parallel,
        gamma: args.gamma,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match err.exit_code() {
                1 => "config",
                _ => "runtime",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": kind, "message": err.to_string() })
            );
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
