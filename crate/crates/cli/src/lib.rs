//! Batch front end for `peridyn-core`: reads a TOML run description,
//! runs a solve or a limit study and writes CSV tables plus a summary.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, parse_config_str, RunConfig, StudyConfig};
pub use error::CliError;
pub use run::{run, Outcome};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const CHECK_FAILED: i32 = 2;
}
