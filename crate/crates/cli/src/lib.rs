//! Command-line front end for hosting-capacity studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod solution;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::StudyConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flexhost", version, about = "Risk-aware hosting capacity for flexible loads")]
pub struct Cli {
    /// Study configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set risk.rho=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the feeder, profiles and baseline feasibility.
    Validate,
    /// Residual capacity table `t,timestamp,delta_p_kw,binding`.
    Residual {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the hosting capacity at the configured lambda.
    Solve {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune lambda to meet an intervention target.
    Tune {
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gain and intervention-count tables over the configured grids.
    Sweep {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Load-vs-limit, violation and CDF tables from solution files.
    Report {
        #[arg(required = true)]
        solutions: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// VaR, CVaR and the empirical CDF of a solution's violations.
    Risk {
        solution: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic study's feeder, profiles and config.
    Synth {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = StudyConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Validate => commands::validate(&cfg, out),
        Command::Residual { out: dest } => commands::residual(&cfg, dest.as_deref(), out),
        Command::Solve { out: dest } => commands::solve(&cfg, dest.as_deref(), out),
        Command::Tune { target, out: dest } => commands::tune(&cfg, *target, dest.as_deref(), out),
        Command::Sweep { out_dir } => commands::sweep(&cfg, out_dir.as_deref(), out),
        Command::Report { solutions, out_dir } => {
            commands::report(solutions, out_dir.as_deref().unwrap_or(&cfg.output_dir), out)
        }
        Command::Risk { solution, out: dest } => commands::risk(solution, dest.as_deref(), out),
        Command::Synth { out_dir } => commands::synth(&cfg, out_dir.as_deref().unwrap_or(&cfg.output_dir), out),
    }
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { error::ExitKind::Usage.code() } else { 0 };
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.kind.code()
        }
    }
}
