use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::archive::{self, RunArchive, ARCHIVE_FILE};
use crate::config::{ExperimentConfig, ExperimentKind, LoadedConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::Options;

#[derive(Debug, Parser)]
#[command(name = "pronk", version, about = "Pronking controller experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; absent keys take documented defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `experiment.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for grids (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write CSVs in SI units.
    #[arg(long, global = true)]
    pub si: bool,
    /// Also write the continuous trajectory of a single run.
    #[arg(long, global = true)]
    pub trajectory: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-loop strides from the configured start.
    Simulate,
    /// Steady-state error against parameter miscalibration.
    Sweep,
    /// Eigenvalues of the linearized stride map over a grid.
    Stability,
    /// Re-run an archive and check that every artifact is reproduced.
    Replay { archive: PathBuf },
}

/// What a successful invocation produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: Option<PathBuf>,
    pub files: Vec<String>,
    pub lines: Vec<String>,
}

fn load_config(path: Option<&PathBuf>) -> Result<LoadedConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| HarnessError::ReadConfig {
                path: p.clone(),
                source,
            })?;
            ExperimentConfig::from_toml(&text)
        }
        None => ExperimentConfig::from_toml(""),
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let workers = cli.workers.unwrap_or(0);
    let kind = match &cli.command {
        Command::Simulate => ExperimentKind::Simulate,
        Command::Sweep => ExperimentKind::Sweep,
        Command::Stability => ExperimentKind::Stability,
        Command::Replay { archive } => return replay(archive, cli.out.as_ref(), workers),
    };
    let loaded = load_config(cli.config.as_ref())?;
    let opts = Options {
        si: cli.si,
        trajectory: cli.trajectory,
        workers,
    };
    let a = archive::run(kind, &loaded.config, &loaded.defaulted, &opts)?;
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.config.experiment.output_dir));
    archive::write_outputs(&dir, &a.outputs, Some(&a))?;
    let mut files: Vec<String> = a.outputs.keys().cloned().collect();
    files.push(ARCHIVE_FILE.into());
    let mut lines = vec![format!("{} finished in {} ms", kind.as_str(), a.elapsed_ms)];
    if !loaded.defaulted.is_empty() {
        lines.push(format!("{} keys defaulted (listed in the archive)", loaded.defaulted.len()));
    }
    Ok(Report {
        out_dir: Some(dir),
        files,
        lines,
    })
}

fn replay(path: &PathBuf, out: Option<&PathBuf>, workers: usize) -> Result<Report> {
    let a = RunArchive::load(path)?;
    let fresh = a.replay(workers)?;
    if let Some(dir) = out {
        archive::write_outputs(dir, &fresh, None)?;
    }
    Ok(Report {
        out_dir: out.cloned(),
        files: fresh.keys().cloned().collect(),
        lines: vec![format!("replay of {} reproduced {} artifacts bitwise", a.kind.as_str(), fresh.len())],
    })
}
