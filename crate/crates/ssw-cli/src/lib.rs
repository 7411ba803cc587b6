//! Config schema, experiment orchestration and output emission for the
//! `ssw` binary. Kept as a library so integration tests can drive the
//! full pipeline without spawning processes.

pub mod config;
pub mod manifest;
pub mod runner;

pub use config::{ConfigError, Diagnostic, Experiment, RunKind};
pub use runner::{execute, OutputFile, RunError, RunOutput};
