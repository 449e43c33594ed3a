use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use triad_core::commands::{run_command, Command, Status};
use triad_core::config::{load_config, ExperimentConfig};
use triad_core::{Error, ModelKind};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Simulate,
    Ensemble,
    Filter,
    Calibrate,
    Repeat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Det,
    Hst,
    Est,
}

/// Stochastic helical triad experiments: simulation, ensembles, particle
/// filtering and noise calibration.
#[derive(Parser, Debug)]
#[command(name = "triad-da", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment configuration (TOML with dotted keys).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: output.dir, else $TRIAD_DA_OUT, else ./triad-da-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<Model>,
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(m) = cli.model {
        cfg.model = match m {
            Model::Det => ModelKind::Deterministic,
            Model::Hst => ModelKind::Hst,
            Model::Est => ModelKind::Est,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("triad-da: {e}");
            return ExitCode::from(2);
        }
    };
    let cmd = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Ensemble => Command::Ensemble,
        Cmd::Filter => Command::Filter,
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Repeat => Command::Repeat,
    };
    match run_command(cmd, &cfg) {
        Ok(report) => {
            match report.status {
                Status::Success => {}
                Status::Diverged { t } => eprintln!("triad-da: trajectory diverged at t = {t}"),
                Status::Degenerate { t } => eprintln!("triad-da: filter degeneracy: zero total likelihood at t = {t}"),
            }
            eprintln!("{} artifacts written to {}", report.artifacts.len(), report.out_dir.display());
            ExitCode::from(report.status.exit_code() as u8)
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("triad-da: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("triad-da: {e}");
            ExitCode::from(1)
        }
    }
}
