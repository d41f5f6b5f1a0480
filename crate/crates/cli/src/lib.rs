//! File formats and commands behind the `bathsim` binary.

pub mod commands;
pub mod pnm;

use std::path::{Path, PathBuf};

use bathsim_core::config::ScenarioConfig;
use thiserror::Error;

/// Exit status for success.
pub const EXIT_OK: u8 = 0;
/// Exit status for a runtime fault (controller, I/O, numerical).
pub const EXIT_RUNTIME: u8 = 2;
/// Exit status for bad usage, configuration or input data.
pub const EXIT_USAGE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}

/// Reads and validates a scenario file. Parse errors carry line and column.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, String> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// Worker pool size: `RABBIT_SIM_THREADS` when set to a positive integer,
/// otherwise the machine's parallelism.
pub fn worker_threads() -> usize {
    std::env::var("RABBIT_SIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
