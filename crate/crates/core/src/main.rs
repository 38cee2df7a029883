use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hetsync::harness::{cmd_simulate, cmd_solve, cmd_sweep, sweep_csv, HarnessError, RunOptions};

#[derive(Parser)]
#[command(
    name = "hetsync",
    version,
    about = "Barrier solver and synchronization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the barrier period for a cluster and print it as JSON.
    Solve {
        /// Cluster config with `iter_ticks` and `staleness_bound`.
        cluster: PathBuf,
    },
    /// Run every strategy and seed in an experiment config.
    Simulate {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Sweep the staleness bound of the load-balanced strategy.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "M")]
        param: String,
        #[arg(long)]
        from: u64,
        #[arg(long)]
        to: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Solve { cluster } => {
            let solution = cmd_solve(&cluster)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&solution)
                    .map_err(|e| HarnessError::Other(e.to_string()))?
            );
        }
        Command::Simulate { config, output_dir } => {
            let options = RunOptions::from_env(output_dir)?;
            let summary = cmd_simulate(&config, &options)?;
            for s in &summary.strategies {
                println!(
                    "{:<20} loss {:.4}  acc {:.4}  iters/ktick {:.2}  idle {:.4}",
                    s.label,
                    s.mean_final_loss,
                    s.mean_final_accuracy,
                    s.mean_throughput_iters_per_ktick,
                    s.mean_idle_fraction
                );
            }
        }
        Command::Sweep {
            config,
            param,
            from,
            to,
            output_dir,
        } => {
            let options = RunOptions::from_env(output_dir)?;
            let rows = cmd_sweep(&config, &param, from, to, &options)?;
            print!("{}", sweep_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
