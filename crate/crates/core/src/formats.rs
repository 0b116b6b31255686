//! Line-delimited JSON files and the small JSON documents written next to
//! them (thresholds, summaries, run manifests).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {} malformed line(s): {}", errors.len(), join(errors))]
    Parse { path: PathBuf, errors: Vec<LineError> },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    /// Offending line numbers (1-based) for parse errors.
    pub fn lines(&self) -> Vec<usize> {
        match self {
            FormatError::Parse { errors, .. } => errors.iter().map(|e| e.line).collect(),
            _ => Vec::new(),
        }
    }
}

fn join(errors: &[LineError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Parses one record per non-blank line, collecting every bad line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) => errors.push(LineError { line: idx + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(FormatError::Parse { path: path.to_path_buf(), errors })
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, FormatError> {
    let path = path.as_ref();
    let mut text = String::new();
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| FormatError::io(path, e))?);
        text.push('\n');
    }
    parse_jsonl(&text, path)
}

pub fn write_jsonl_to<T: Serialize>(mut out: impl Write, records: &[T]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), FormatError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_jsonl_to(BufWriter::new(file), records).map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, FormatError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        errors: vec![LineError { line: e.line(), message: e.to_string() }],
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("serialisable value");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// Per-question failure label file line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub question_id: String,
    pub failure: bool,
}

/// Sidecar path for a file's manifest: `reports.jsonl` → `reports.jsonl.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Reproducibility record written beside every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// `path → sha256` of every input file.
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub partial: bool,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}
