use std::fmt;

use serde::Serialize;
use sleeve_core::Error;

/// A failure reported to the user as `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    /// Prefixes the message with where it happened, e.g. a file name.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::NonFinite { .. } | Error::OutOfRange { .. } | Error::InvalidArgument(_) => "invalid_argument",
            Error::IncompleteLedger { .. } | Error::UnknownTrial(_) | Error::DuplicateResponse(_) => "ledger",
            Error::NoInformation(_) | Error::NoBiasProbes => "no_information",
            Error::NonPositiveSteepness(_) => "invalid_argument",
            Error::ValveInterlock | Error::Rupture { .. } => "fault",
            Error::EmptyTrainingSet | Error::Divergence { .. } | Error::UndefinedImprovement => "learner",
            Error::InvalidTask(_) => "invalid_task",
            Error::Parse { .. } | Error::Csv(_) => "parse",
            Error::Protocol(_) => "protocol",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("json", e.to_string())
    }
}
