//! Experiment runner around `vtpc-core`: configuration, file formats and the
//! `vtpc` subcommands.

pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod export;
pub mod manifest;
pub mod model_io;
pub mod traces;

use std::path::Path;

pub use error::{CliError, CliResult};

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_file(path, s.as_bytes())
}
