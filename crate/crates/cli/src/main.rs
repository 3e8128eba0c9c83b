use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leadsync_cli::{Flags, EXIT_ERROR};

/// Data-driven output synchronization of heterogeneous leader-follower networks.
///
/// Exit codes: 0 success, 2 negative decision, 1 error.
#[derive(Parser)]
#[command(name = "leadsync", version)]
struct Cli {
    #[command(flatten)]
    flags: FlagArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FlagArgs {
    /// Residual bound for solvability decisions.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol_informativity: f64,
    /// Strict Schur stability margin.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_stability: f64,
    /// Synchronization error bound for the simulation verdict.
    #[arg(long, global = true, default_value_t = 1e-3)]
    tol_verdict: f64,
    /// Fraction of the horizon, at its end, over which errors are measured.
    #[arg(long, global = true, default_value_t = 0.25)]
    tail_fraction: f64,
    /// Seed for audit sampling and initial states.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// CSV file with a coupling gain F to use instead of the designed one.
    #[arg(long, global = true)]
    f_matrix: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide informativity for every follower.
    Check { scenario: PathBuf },
    /// Design the protocol and write it as JSON.
    Synthesize {
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Simulate a protocol on the scenario's plant models.
    Simulate {
        scenario: PathBuf,
        protocol: PathBuf,
        #[arg(long, default_value_t = 300)]
        horizon: usize,
        /// Trace CSV destination.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the full pipeline on the built-in nine-follower example.
    DemoPaper,
    /// Write the built-in example as a scenario file.
    ExportExample { out: PathBuf },
}

fn main() -> ExitCode {
    // clap would exit with 2 on usage errors, which means "negative" here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR as u8) } else { ExitCode::SUCCESS };
        }
    };
    let f = cli.flags;
    let flags = Flags {
        tol_informativity: f.tol_informativity,
        tol_stability: f.tol_stability,
        tol_verdict: f.tol_verdict,
        tail_fraction: f.tail_fraction,
        seed: f.seed,
        f_matrix: f.f_matrix,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Check { scenario } => leadsync_cli::cmd_check(scenario, &flags, &mut out),
        Command::Synthesize { scenario, out: path } => leadsync_cli::cmd_synthesize(scenario, path, &flags, &mut out),
        Command::Simulate { scenario, protocol, horizon, out: path } => {
            leadsync_cli::cmd_simulate(scenario, protocol, *horizon, path, &flags, &mut out)
        }
        Command::DemoPaper => leadsync_cli::cmd_demo_paper(&flags, &mut out),
        Command::ExportExample { out: path } => leadsync_cli::cmd_export_example(path, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
