use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roscert_cli::run::{self, Overrides};

/// Certify regions of synchronization of polynomial networks.
#[derive(Parser)]
#[command(name = "ros-cert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, verify and validate a problem, writing the artifacts.
    Run {
        problem: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Write the SDP in sparse text form.
        #[arg(long, value_name = "PATH")]
        dump_sdp: Option<PathBuf>,
    },
    /// Re-verify and validate a stored certificate without solving.
    Check {
        problem: PathBuf,
        certificate: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// Output directory (overrides the problem file).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every sampling step.
    #[arg(long)]
    seed: Option<u64>,
    /// Single even degree of V.
    #[arg(long)]
    deg: Option<u32>,
    /// Single decay rate.
    #[arg(long)]
    lambda: Option<f64>,
}

fn overrides(flags: Flags, dump_sdp: Option<PathBuf>) -> Overrides {
    Overrides { out: flags.out, seed: flags.seed, deg: flags.deg, lambda: flags.lambda, dump_sdp }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { problem, flags, dump_sdp } => run::run(&problem, &overrides(flags, dump_sdp)),
        Command::Check { problem, certificate, flags } => run::check(&problem, &certificate, &overrides(flags, None)),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::from(outcome.status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status() as u8)
        }
    }
}
