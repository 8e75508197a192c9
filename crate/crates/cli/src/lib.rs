//! Command-line front end for adaptive Learn-then-Test: experiment config
//! files, run directories, report emission and an external risk-oracle client.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod rundir;

pub use config::{ExperimentConfig, GridPoint, SweepAxes};
pub use oracle::{OracleClient, OracleError, OracleMessage};
pub use rundir::{verify_replay, RunManifest};
