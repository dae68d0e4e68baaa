//! Library side of the `frac` command-line tool.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_table, validate, Command, RunConfig};
pub use report::{emit, Emitted, ExperimentReport};
pub use run::run;

use frac_core::FracError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Frac(#[from] FracError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for rejected input, 3 for numerical failure, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Frac(e) if e.is_validation() => 2,
            CliError::Frac(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Worker count: `FRAC_THREADS` wins over the config; 0 means all cores.
pub fn resolve_threads(configured: usize, env: Option<&str>) -> Result<usize, CliError> {
    let n = match env {
        Some(v) => v.trim().parse::<usize>().map_err(|_| CliError::Config(vec![format!("FRAC_THREADS: expected an integer, got `{v}`")]))?,
        None => configured,
    };
    Ok(if n == 0 { std::thread::available_parallelism().map_or(1, |p| p.get()) } else { n })
}
