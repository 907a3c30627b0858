//! Experiment runner behind the `opsym` binary. Each `cmd_*` function returns
//! a serialisable result; [`Report`] wraps it with the toolkit version and a
//! hash of the run configuration.

pub mod builtins;
pub mod commands;

use std::path::{Path, PathBuf};

use opsym::Budget;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use commands::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] opsym::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Everything that influences a report. Equal configs give byte-identical
/// output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub restarts: usize,
    pub truncation: usize,
    pub tol: f64,
    pub out: OutputFormat,
    /// Wall-clock cap for sampling loops; `None` means run every sample.
    pub budget_ms: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0x5eed, restarts: 8, truncation: 4, tol: 1e-9, out: OutputFormat::Json, budget_ms: None }
    }
}

impl RunConfig {
    pub fn budget(&self) -> Budget {
        Budget { seed: self.seed, restarts: self.restarts, truncation: self.truncation, ..Budget::default() }
    }

    /// First 16 hex digits of SHA-256 over the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub(crate) fn deadline(&self) -> Deadline {
        Deadline { start: std::time::Instant::now(), limit_ms: self.budget_ms }
    }
}

pub(crate) struct Deadline {
    start: std::time::Instant,
    limit_ms: Option<u64>,
}

impl Deadline {
    pub(crate) fn expired(&self) -> bool {
        self.limit_ms.is_some_and(|ms| self.start.elapsed().as_millis() >= ms as u128)
    }
}

/// A flat table for CSV output.
pub trait Tabular {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub result: T,
}

impl<T: Serialize + Tabular> Report<T> {
    pub fn new(command: &str, config: &RunConfig, result: T) -> Self {
        Report {
            tool: "opsym".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config.hash(),
            config: config.clone(),
            result,
        }
    }

    pub fn render(&self) -> String {
        match self.config.out {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serialises");
                s.push('\n');
                s
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(self.result.header()).expect("in-memory write");
                for row in self.result.rows() {
                    w.write_record(&row).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
            }
        }
    }
}

pub(crate) fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Parses JSON, keeping serde's line and column on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    parse_json(path, &read_file(path)?)
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
