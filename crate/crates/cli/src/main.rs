use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saa_cli::{run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "saa-clt",
    version,
    about = "SAA value-function CLT experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Riccati coefficients, asymptotic variance law and variance curves.
    LqrAnalytic,
    /// Replicated SAA runs with distribution diagnostics.
    Simulate,
    /// Covariance functions on the covariance grid and variance decompositions.
    Covariance,
    /// Variance of the total cost along simulated optimal trajectories.
    OptimalValue,
}

#[derive(Args)]
struct Opts {
    /// JSON run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named configuration: lqr-paper, lqr-paper-qq or inventory-default.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn load(opts: &Opts) -> Result<RunConfig, CliError> {
    let mut config = match (&opts.config, &opts.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            RunConfig::from_json(&text)?
        }
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => {
            return Err(CliError::Config(
                "pass --config <path> or --preset <name>".into(),
            ))
        }
    };
    if let Some(seed) = opts.seed {
        config.mc.seed = seed;
    }
    if let Some(workers) = opts.workers {
        config.mc.workers = workers;
    }
    if let Some(out) = &opts.out {
        config.output.directory = out.clone();
    }
    Ok(config)
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim()),
    };
    let command = match cli.command {
        Cmd::LqrAnalytic => Command::LqrAnalytic,
        Cmd::Simulate => Command::Simulate,
        Cmd::Covariance => Command::Covariance,
        Cmd::OptimalValue => Command::OptimalValue,
    };
    match load(&cli.opts).and_then(|config| run(command, &config)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
