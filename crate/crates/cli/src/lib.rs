//! Batch front end for `cdw-core`: TOML run configs, sweep expansion and
//! CSV output.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{load_config, Kind, RunConfig};
pub use runner::{run, RunError, RunOptions, RunReport};
