//! `hlaser`: observables, sweeps, traces and verification runs for
//! band-resolved laser models.

mod commands;
mod error;
mod output;
mod settings;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{FitArgs, PredictArgs, TraceArgs, TraceKind, VerifyCmd};
use error::CliError;
use settings::{CommonArgs, Settings};
use sweep::SweepArgs;

#[derive(Debug, Parser)]
#[command(name = "hlaser", version, about = "Heisenberg-limited laser models")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady-state observables of one model, with the closed-form prediction.
    Observe,
    /// Observables over a parameter grid.
    Sweep(SweepArgs),
    /// First-order coherence against delay.
    TraceG1(TraceArgs),
    /// Phase-state second-order coherence against delay.
    TraceG2(TraceArgs),
    /// Numerical verification suites.
    Verify {
        #[command(subcommand)]
        which: VerifyCmd,
    },
    /// Closed-form predictions.
    Predict(PredictArgs),
    /// Power-law fit of two CSV columns.
    Fit(FitArgs),
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let workers = std::env::var("WORKERS").ok();
    let s = Settings::resolve(&cli.common, workers.as_deref())?;
    match &cli.command {
        Command::Observe => commands::cmd_observe(&s),
        Command::Sweep(a) => sweep::run(a, &s),
        Command::TraceG1(a) => commands::cmd_trace(&s, a, TraceKind::G1),
        Command::TraceG2(a) => commands::cmd_trace(&s, a, TraceKind::G2),
        Command::Verify { which } => commands::cmd_verify(&s, which),
        Command::Predict(a) => commands::cmd_predict(&s, a),
        Command::Fit(a) => commands::cmd_fit(&s, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
