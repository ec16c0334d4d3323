use std::fmt;
use std::path::Path;

/// Failure categories with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or missing configuration (exit code 2).
    Config,
    /// Malformed or inconsistent input data (exit code 3).
    Data,
    /// Model backend failures (exit code 4).
    Backend,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Backend => 4,
        }
    }
}

#[derive(Debug)]
pub struct Error {
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            ErrorKind::Config => "config error",
            ErrorKind::Data => "data error",
            ErrorKind::Backend => "backend error",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for Error {}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Error {
            kind: ErrorKind::Backend,
            message: message.into(),
        }
    }

    /// A data error prefixed with the offending path.
    pub fn in_file(path: &Path, e: impl fmt::Display) -> Self {
        Error::data(format!("{}: {e}", path.display()))
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Error::data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

