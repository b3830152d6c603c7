use std::fmt;
use std::io;

use serde::Serialize;
use solarcap_core::apps::AppError;
use solarcap_core::explain::ExplainError;
use solarcap_core::gbtree::GbtError;
use solarcap_core::panel::PanelError;
use solarcap_core::select::SelectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Failed,
    SchemaMismatch,
    MissingInput,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Failed => 1,
            ErrorKind::SchemaMismatch => 2,
            ErrorKind::MissingInput => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Failed, message)
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::MissingInput, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.exit_code(),
        })
        .to_string()
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn io_kind(e: &io::Error) -> ErrorKind {
    if e.kind() == io::ErrorKind::NotFound {
        ErrorKind::MissingInput
    } else {
        ErrorKind::Failed
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::new(io_kind(&e), e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::failed(e.to_string())
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        let kind = match &e {
            PanelError::MissingColumn(_) | PanelError::UnknownFeature(_) => ErrorKind::SchemaMismatch,
            PanelError::Io(io) => io_kind(io),
            _ => ErrorKind::Failed,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<GbtError> for CliError {
    fn from(e: GbtError) -> Self {
        match e {
            GbtError::Panel(p) => p.into(),
            GbtError::Io(io) => io.into(),
            GbtError::MissingFeature(_) | GbtError::SchemaVersion { .. } => {
                Self::new(ErrorKind::SchemaMismatch, e.to_string())
            }
            other => Self::failed(other.to_string()),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Panel(p) => p.into(),
            SelectError::Gbt(g) => g.into(),
            other => Self::failed(other.to_string()),
        }
    }
}

impl From<AppError> for CliError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Panel(p) => p.into(),
            AppError::Gbt(g) => g.into(),
            AppError::Io(io) => io.into(),
            AppError::SchemaMismatch(_) => Self::new(ErrorKind::SchemaMismatch, e.to_string()),
            other => Self::failed(other.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Gbt(g) => g.into(),
            ExplainError::Io(io) => io.into(),
            other => Self::failed(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::failed(e.to_string())
    }
}
