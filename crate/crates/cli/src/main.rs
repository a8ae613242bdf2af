use std::io;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liftsvd::commands::{self, DEFAULT_NULL_TOL};
use liftsvd::config::{CommonArgs, RunConfig};
use liftsvd::CliError;

#[derive(Debug, Parser)]
#[command(name = "liftsvd", version, about = "Lifted singular value decompositions of nonlinear functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the decomposition and dump lifted points, K and relaxed null samples.
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        /// Tolerance for the relaxed null set, relative to ‖x‖.
        #[arg(long, default_value_t = DEFAULT_NULL_TOL)]
        null_tol: f64,
    },
    /// Run the certificate suite and write certificates.json.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid data for a scalar function: f, reconstruction, envelope and lifting.
    Fig2 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid data for a two-input scalar function projected on the right singular vectors.
    Fig3 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Lower-bound each component's induced norm and check the declared bounds.
    EstimateNorms {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Decompose { common, null_tol } => {
            commands::cmd_decompose(&RunConfig::from_args(&common)?, null_tol, &mut out)
        }
        Command::Certify { common } => commands::cmd_certify(&RunConfig::from_args(&common)?, &mut out),
        Command::Fig2 { common } => commands::cmd_fig2(&RunConfig::from_args(&common)?, &mut out),
        Command::Fig3 { common } => commands::cmd_fig3(&RunConfig::from_args(&common)?, &mut out),
        Command::EstimateNorms { common, restarts } => {
            commands::cmd_estimate_norms(&RunConfig::from_args(&common)?, restarts, &mut out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LIFTSVD_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
