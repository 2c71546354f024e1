//! Command-line harness: `solve`, `scaling` and `verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

pub use commands::{
    ceiling_first_order, ceiling_second_order, fit_exponent, format_scaling, run_scaling, run_solve, run_verify,
    scaling, solve, verify_table, CertificateReport, ScalingRow, SolveReport, Solved, VerifyTable,
};
pub use config::{Algo, RunConfig, Settings, DEFAULT_EPS, DEFAULT_EPS0};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_MAX_ITERATIONS: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<adabar::Error> for CliError {
    fn from(e: adabar::Error) -> Self {
        use adabar::Error as E;
        match e {
            E::InvalidDimension(_)
            | E::DimensionMismatch { .. }
            | E::InvalidBounds { .. }
            | E::InvalidRadius(_)
            | E::InfeasibleStart(_)
            | E::InvalidData(_)
            | E::InvalidParameter(_)
            | E::MissingHessian
            | E::RankDeficient { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adabar", version, about = "Adaptive barrier solvers for nonconvex problems with conic and affine constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solve, write the trace CSV and the JSON report.
    Solve(CommandArgs),
    /// Solve for each tolerance in `--eps-list` and fit the iteration exponent.
    Scaling(CommandArgs),
    /// Run the numeric self-checks for a built-in problem.
    Verify(CommandArgs),
}

#[derive(Debug, clap::Args)]
pub struct CommandArgs {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

impl CommandArgs {
    fn settings(self) -> Result<Settings, CliError> {
        Settings::load(self.settings, self.config.as_deref())
    }
}

fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Solve(args) => args.settings().and_then(|s| run_solve(&s)),
        Command::Scaling(args) => args.settings().and_then(|s| run_scaling(&s)),
        Command::Verify(args) => args.settings().and_then(|s| run_verify(&s)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_INPUT
                    } else {
                        EXIT_CONVERGED
                    }
                }
                _ => {
                    let text = e.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
                    EXIT_INPUT
                }
            }
        }
    }
}
