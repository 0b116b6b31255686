use std::fmt;

use semunc::formats::FormatError;
use semunc::{DecompositionError, EvalError, GraphError, ProviderError};
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const DATA: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CALIBRATION: i32 = 3;
    pub const DEGENERATE_LABELS: i32 = 4;
    pub const PROVIDER: i32 = 5;
}

/// Failure reported to stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lines: Vec<usize>,
}

impl CliError {
    pub fn new(error: &'static str, exit_code: i32, message: impl fmt::Display) -> Self {
        CliError { error, exit_code, message: message.to_string(), lines: Vec::new() }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Self::new("usage", exit::USAGE, message)
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self::new("data", exit::DATA, message)
    }

    pub fn provider(message: impl fmt::Display) -> Self {
        Self::new("provider", exit::PROVIDER, message)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let lines = e.lines();
        let kind = if lines.is_empty() { "io" } else { "parse" };
        CliError { lines, ..CliError::new(kind, exit::DATA, &e) }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Config(_) => CliError::usage(e),
            ProviderError::MalformedMatrix { .. } => CliError::data(e),
            _ => CliError::provider(e),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Provider { .. } => CliError::provider(e),
            _ => CliError::data(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::SingleClass | EvalError::Empty => Self::new("degenerate_labels", exit::DEGENERATE_LABELS, e),
            EvalError::Config(_) => CliError::usage(e),
            EvalError::Judge(_) => CliError::provider(e),
            _ => CliError::data(e),
        }
    }
}

impl From<DecompositionError> for CliError {
    fn from(e: DecompositionError) -> Self {
        match e {
            DecompositionError::NoQualifyingTau { .. } => Self::new("calibration", exit::CALIBRATION, e),
            DecompositionError::EmptyGrid | DecompositionError::UnsortedGrid | DecompositionError::BaselineTooSmall(_) => {
                CliError::usage(e)
            }
            DecompositionError::Eval(inner) => inner.into(),
            _ => Self::new("numerical", exit::DATA, e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", exit::DATA, e)
    }
}
