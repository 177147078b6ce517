//! Self-contained run archives and bitwise replay.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiment::{self, Options};
use crate::output::{self, Outputs, Units};

pub const ARCHIVE_FILE: &str = "archive.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub tool: String,
    pub version: String,
    pub kind: ExperimentKind,
    /// Full configuration, defaults included.
    pub config: ExperimentConfig,
    /// Keys that were absent from the input and filled from defaults.
    pub defaulted: Vec<String>,
    pub si: bool,
    pub trajectory: bool,
    /// Metadata only; results do not depend on it.
    pub workers: usize,
    pub started_unix_ms: u64,
    pub elapsed_ms: u64,
    /// Artifact name to contents, the archive itself excluded.
    pub outputs: BTreeMap<String, String>,
}

/// Runs `kind` and renders its artifacts.
pub fn render(kind: ExperimentKind, cfg: &ExperimentConfig, opts: &Options) -> Result<Outputs> {
    let mut out = Outputs::new();
    let units = |scale| Units::new(scale, opts.si);
    match kind {
        ExperimentKind::Simulate => {
            let res = experiment::simulate(cfg, opts)?;
            let u = units(res.setup.scale);
            out.insert("strides.csv".into(), output::strides_csv(&res.run, &u));
            if opts.trajectory {
                out.insert("trajectory.csv".into(), output::trajectory_csv(&res.run, &u));
            }
            out.insert("response.svg".into(), output::response_svg(&res, &u));
        }
        ExperimentKind::Sweep => {
            let res = experiment::sweep(cfg, opts)?;
            let u = units(res.setup.scale);
            out.insert("sweep.csv".into(), output::sweep_csv(&res, &u));
            out.insert("sweep.svg".into(), output::sweep_svg(&res, &u));
        }
        ExperimentKind::Stability => {
            let res = experiment::stability(cfg, opts)?;
            let u = units(res.setup.scale);
            out.insert("stability.csv".into(), output::stability_csv(&res, &u));
            out.insert("stability.svg".into(), output::stability_svg(&res, &u));
        }
    }
    Ok(out)
}

/// Runs an experiment and packs the archive.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, defaulted: &[String], opts: &Options) -> Result<RunArchive> {
    let mut config = cfg.clone();
    config.experiment.kind = kind;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    let clock = Instant::now();
    let outputs = render(kind, &config, opts)?;
    Ok(RunArchive {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind,
        config,
        defaulted: defaulted.to_vec(),
        si: opts.si,
        trajectory: opts.trajectory,
        workers: opts.workers,
        started_unix_ms: started,
        elapsed_ms: clock.elapsed().as_millis() as u64,
        outputs,
    })
}

impl RunArchive {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: RunArchive = serde_json::from_str(text).map_err(|e| HarnessError::Archive(e.to_string()))?;
        a.config.validate()?;
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        RunArchive::from_json(&text)
    }

    /// Re-executes the embedded configuration. Returns the fresh outputs, or
    /// the names of artifacts whose bytes differ.
    pub fn replay(&self, workers: usize) -> Result<Outputs> {
        let opts = Options {
            si: self.si,
            trajectory: self.trajectory,
            workers,
        };
        let fresh = render(self.kind, &self.config, &opts)?;
        let names: std::collections::BTreeSet<&String> = fresh.keys().chain(self.outputs.keys()).collect();
        let differing: Vec<String> = names
            .into_iter()
            .filter(|n| fresh.get(*n) != self.outputs.get(*n))
            .cloned()
            .collect();
        if differing.is_empty() {
            Ok(fresh)
        } else {
            Err(HarnessError::ReplayMismatch(differing))
        }
    }
}

/// Writes every artifact and, when given, the archive into `dir`.
pub fn write_outputs(dir: &Path, outputs: &Outputs, archive: Option<&RunArchive>) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, text) in outputs {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io(&p))?;
    }
    if let Some(a) = archive {
        let p = dir.join(ARCHIVE_FILE);
        std::fs::write(&p, a.to_json()).map_err(io(&p))?;
    }
    Ok(())
}
