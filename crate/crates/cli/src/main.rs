use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ioncool_cli::{run_experiment, CliError, Experiment, ExperimentConfig, Overrides};

/// Superfast cooling experiments: simulate, optimize, robustness, chain, verify.
#[derive(Parser)]
#[command(name = "ioncool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a cycle repeatedly to a thermal state.
    Simulate(Common),
    /// Search for a cooling cycle.
    Optimize(Common),
    /// Monte Carlo noise sweep of a cycle.
    Robustness(Common),
    /// Centre-of-mass occupation of ion chains versus N.
    Chain(Common),
    /// Invariant and oracle self-checks.
    Verify(Common),
    /// Run the experiment named in the config file.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config (schema ioncool-config/1).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides IONCOOL_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_fock: Option<usize>,
    /// Ignore free evolution during pulses.
    #[arg(long)]
    impulsive: bool,
}

fn execute(command: Command) -> Result<(), CliError> {
    let (experiment, common) = match command {
        Command::Simulate(c) => (Some(Experiment::Simulate), c),
        Command::Optimize(c) => (Some(Experiment::Optimize), c),
        Command::Robustness(c) => (Some(Experiment::Robustness), c),
        Command::Chain(c) => (Some(Experiment::Chain), c),
        Command::Verify(c) => (Some(Experiment::Verify), c),
        Command::Run(c) => (None, c),
    };
    let config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let experiment = experiment
        .or(config.experiment)
        .ok_or_else(|| CliError::Config("`run` needs `experiment` in the config".into()))?;
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
        n_fock: common.n_fock,
        impulsive: common.impulsive,
        base_dir: common
            .config
            .as_ref()
            .and_then(|p| p.parent())
            .map(PathBuf::from),
    };
    let report = run_experiment(experiment, &config, &overrides)?;
    println!("{} -> {}", experiment.name(), report.out_dir.display());
    println!("{}", serde_json::to_string(&report.summary).expect("json"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
