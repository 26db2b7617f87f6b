use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orthoplap_cli::{cmd_solve, cmd_sweep, cmd_verify, to_exit, with_workers, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "orthoplap", version, about = "Regularized orthotropic p-Laplace solves and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config; keys missing from it take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one config key, e.g. `--set n=[65,129]` or `--set solver.max_newton=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the eps ladder and write field snapshots.
    Solve(Common),
    /// Run every check and write reports; exit 0 iff all pass.
    Verify(Common),
    /// Tabulate measured constants over p × eps × n.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> anyhow::Result<u8>) = match &cli.command {
        Command::Solve(c) => (c, cmd_solve),
        Command::Verify(c) => (c, cmd_verify),
        Command::Sweep(c) => (c, cmd_sweep),
    };
    let cfg = match RunConfig::load(common.config.as_deref(), &common.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    to_exit(with_workers(|| run(&cfg)).and_then(|r| r))
}
