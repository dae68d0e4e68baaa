//! Report type and atomic JSON/CSV emission.

use crate::config::RunConfig;
use crate::CliError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool: String,
    pub config: RunConfig,
    /// Worker threads actually used; results are deterministic per thread count.
    pub threads: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: Map<String, Value>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn new(config: &RunConfig, threads: usize, columns: &[&str]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: format!("frac {}", env!("CARGO_PKG_VERSION")),
            config: config.clone(),
            threads,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Map::new(),
            timing: Timing { elapsed_secs: 0.0 },
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    /// JSON without the timing block, for golden and determinism comparisons.
    pub fn canonical_json(&self) -> Result<String, CliError> {
        let mut v = serde_json::to_value(self).map_err(|e| CliError::Io(e.to_string()))?;
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
        serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| CliError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell)).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Paths written by [`emit`].
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub json: PathBuf,
    pub csv: Option<PathBuf>,
}

/// Writes the JSON report and, when there are rows, the CSV beside it.
/// Each file goes to a temporary sibling first and is renamed into place.
pub fn emit(report: &ExperimentReport) -> Result<Emitted, CliError> {
    let json = report.config.out.clone();
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&json, text.as_bytes())?;
    let csv = if report.rows.is_empty() {
        None
    } else {
        let path = json.with_extension("csv");
        write_atomic(&path, &report.to_csv()?)?;
        Some(path)
    };
    Ok(Emitted { json, csv })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
