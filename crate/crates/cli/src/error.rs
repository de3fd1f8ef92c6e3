use std::io;
use std::path::Path;

use bertcaps_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Error {
    pub kind: Kind,
    pub message: String,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Error { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self::new(Kind::Numeric, message)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with `context`, keeping the kind.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        Error { kind: self.kind, message: format!("{context}: {}", self.message) }
    }

    /// One-line JSON object for the error stream.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind.as_str(), "message": self.message }).to_string()
    }
}

impl From<CoreError> for Error {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::Config(_) => Kind::Usage,
            CoreError::Evaluation(_) | CoreError::Contract(_) => Kind::Numeric,
            CoreError::Shape { .. } | CoreError::Empty(_) | CoreError::Input(_) => Kind::Data,
        };
        Error::new(kind, e.to_string())
    }
}
