use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use satguard::Execution;
use satguard_cli::commands::{self, RunOptions};
use satguard_cli::CliError;

/// Tuning, simulation and verification of saturated dynamic output feedback.
#[derive(Parser)]
#[command(name = "satguard", version)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the tuning report (exit 0 feasible, 2 infeasible, 1 input error).
    Tune { config: PathBuf },
    /// Simulate the closed loop and write the trajectory CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate phi, lambda*phi, delta_u and the error bound over a lambda grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and check every claim (exit 0 iff all applicable claims hold).
    Verify { config: PathBuf },
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let opts = RunOptions::from_env(exec)?;
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Tune { config } => commands::tune(config, &opts, &mut out),
        Command::Simulate { config, out: csv } => commands::simulate_cmd(config, csv, &opts, &mut out),
        Command::Sweep {
            config,
            lambda_min,
            lambda_max,
            points,
            out: csv,
        } => commands::sweep_cmd(config, *lambda_min, *lambda_max, *points, csv, &opts, &mut out),
        Command::Verify { config } => commands::verify(config, &opts, &mut out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { satguard_cli::exit::INPUT as u8 } else { 0 });
        }
    };
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}
