//! Command-line front end of the phase-field fracture solver: run
//! configuration, scenarios, orchestration of the adaptive loop and output
//! files.

pub mod config;
pub mod output;
pub mod run;
pub mod scenario;

pub use config::{parse_config, read_config, RunConfig};
pub use run::{run, RunError, RunSummary};
