//! Experiment harness around `pronk-core`: TOML configuration, parallel
//! sweeps and stability scans, CSV and SVG artifacts, and replayable
//! JSON archives.

pub mod archive;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod svg;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
