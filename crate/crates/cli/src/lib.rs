//! Command-line front end: TOML scenarios in, CSV paths and JSON summaries out.

pub mod check;
pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{Overrides, ScenarioConfig, SweepParameter};
pub use error::{CliError, CliResult};
