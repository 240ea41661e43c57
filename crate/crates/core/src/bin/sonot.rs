use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sonot::cli;

/// Sum-of-norms regularized optimal transport experiments.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the SON problem; writes coupling.csv, support.csv, blocks.csv, report.json.
    Solve(Run),
    /// Evaluate recovery certificates; writes certificate.json.
    Certify(Run),
    /// Compare SON against baselines; writes compare.json.
    Compare(Run),
    /// Generate a dataset; writes source.csv and target.csv.
    Gen(Run),
}

#[derive(clap::Args)]
struct Run {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Config overrides as --dotted.key=value.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (cmd, run) = match args.command {
        Command::Solve(r) => (cli::Subcommand::Solve, r),
        Command::Certify(r) => (cli::Subcommand::Certify, r),
        Command::Compare(r) => (cli::Subcommand::Compare, r),
        Command::Gen(r) => (cli::Subcommand::Gen, r),
    };
    ExitCode::from(cli::run(cmd, &run.config, &run.overrides) as u8)
}
