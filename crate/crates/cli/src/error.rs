use std::fmt;

use ngc_core::edit::EditError;
use ngc_core::geometry::GeometryError;
use ngc_core::ingest::IngestError;
use ngc_core::metrics::MetricError;
use ngc_core::model::{ModelError, TrainError};
use serde::Serialize;

/// Failure class, which decides the process exit code and HTTP status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Malformed or inconsistent input.
    Schema,
    /// Unknown id or revision.
    NotFound,
    /// Stale revision.
    Conflict,
    /// A solver or optimizer failed on valid input.
    Numerical,
    Io,
}

/// Machine-readable error, printed as one JSON line on stderr.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    /// Stable code such as `length_infeasible`.
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl CliError {
    pub fn new(kind: ErrorKind, error: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind, error: error.into(), message: message.into(), line: None, column: None }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Schema, "schema", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, "not_found", message)
    }

    pub fn io(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Io, "io", format!("{context}: {e}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Schema | ErrorKind::NotFound | ErrorKind::Conflict => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " (line {l}, column {c})")?;
        }
        Ok(())
    }
}

impl std::error::Error for CliError {}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        let mut err = CliError::schema(e.to_string());
        if e.line() > 0 {
            err.line = Some(e.line());
            err.column = Some(e.column());
        }
        err
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::new(ErrorKind::Schema, "invalid_geometry", e.to_string())
    }
}

impl From<EditError> for CliError {
    fn from(e: EditError) -> Self {
        let kind = match e.code() {
            "length_infeasible" | "solver_failed" => ErrorKind::Numerical,
            _ if matches!(e, EditError::NonFinite) => ErrorKind::Numerical,
            _ => ErrorKind::Schema,
        };
        CliError::new(kind, e.code(), e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let (kind, code) = match &e {
            ModelError::NonFiniteLoss => (ErrorKind::Numerical, "non_finite"),
            ModelError::Nn(_) => (ErrorKind::Numerical, "network"),
            ModelError::Io(_) => (ErrorKind::Io, "io"),
            ModelError::BadMagic | ModelError::UnsupportedVersion(_) | ModelError::Truncated => (ErrorKind::Schema, "model_file"),
            _ => (ErrorKind::Schema, "model"),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::new(ErrorKind::Numerical, "diverged", e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => CliError::new(ErrorKind::Schema, "train_config", e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let mut err = match &e {
            IngestError::Io(_) => CliError::new(ErrorKind::Io, "io", e.to_string()),
            IngestError::Coverage { .. } => CliError::new(ErrorKind::Numerical, "coverage", e.to_string()),
            _ => CliError::new(ErrorKind::Schema, "mesh", e.to_string()),
        };
        if let IngestError::Obj { line, .. } = e {
            err.line = Some(line);
        }
        err
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let kind = match e {
            MetricError::OpenMesh | MetricError::EmptySet => ErrorKind::Schema,
            _ => ErrorKind::Numerical,
        };
        CliError::new(kind, "metric", e.to_string())
    }
}
