//! `cutpaste` command-line driver.
//!
//! Exit status: 0 success, 1 usage error, 2 verification failure,
//! 3 inadmissible measure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, Mode, Overrides, RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(name = "cutpaste", version, about = "Simulate and verify exchangeable cut-and-paste Markov processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    replicas: Option<u64>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Add a generation timestamp to artifact headers.
    #[arg(long, global = true)]
    timestamps: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the discrete-time chain.
    SimulateDiscrete,
    /// Run the continuous-time process.
    SimulateContinuous,
    /// Run the projected partition process of a homogeneous pair.
    SimulatePartition,
    /// Write the exact kernel or generator at level n.
    Exact,
    /// Run the exact checks; exits 2 if any fails.
    Verify,
    /// Total-variation distance to stationarity by step.
    Mixing,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::SimulateDiscrete => Mode::SimulateDiscrete,
            Command::SimulateContinuous => Mode::SimulateContinuous,
            Command::SimulatePartition => Mode::SimulatePartition,
            Command::Exact => Mode::Exact,
            Command::Verify => Mode::Verify,
            Command::Mixing => Mode::Mixing,
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<commands::Status> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!(UsageError("--config is required".into())))?;
    let mut config = RunConfig::load(path)?;
    let overrides =
        Overrides { seed: cli.seed, replicas: cli.replicas, out_dir: cli.out_dir.clone(), format: cli.format };
    config.apply(cli.command.mode(), &overrides)?;
    let mut out = output::Writer::new(&config, cli.timestamps)?;
    let status = match cli.command {
        Command::SimulateDiscrete => commands::simulate_discrete(&config, &mut out)?,
        Command::SimulateContinuous => commands::simulate_continuous(&config, &mut out)?,
        Command::SimulatePartition => commands::simulate_partition_cmd(&config, &mut out)?,
        Command::Exact => commands::exact(&config, &mut out)?,
        Command::Verify => commands::verify(&config, &mut out)?,
        Command::Mixing => commands::mixing(&config, &mut out)?,
    };
    eprintln!("config sha256 {} seed {}", out.meta().config_sha256, out.meta().seed);
    for path in out.written() {
        eprintln!("wrote {}", path.display());
    }
    Ok(status)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<cutpaste::Error>() {
            return match e {
                cutpaste::Error::Inadmissible(_) | cutpaste::Error::ChargesIdentity | cutpaste::Error::NotHomogeneous(_) => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
