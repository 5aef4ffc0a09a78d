use std::fmt;
use std::path::Path;

use cskg_core::eval::EvalError;
use cskg_core::reader::ReaderError;
use cskg_core::resolver::ResolveError;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input or invalid arguments. Exit 1.
    Parse(String),
    /// A file could not be read or written. Exit 2.
    Io(String),
    /// The reader crashed, timed out or broke the protocol. Exit 3.
    Reader(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Io(_) => 2,
            CliError::Reader(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) | CliError::Io(m) | CliError::Reader(m) => f.write_str(m),
        }
    }
}

impl From<cskg_core::Error> for CliError {
    fn from(e: cskg_core::Error) -> Self {
        match e {
            cskg_core::Error::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Input(inner) => inner.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<ReaderError> for CliError {
    fn from(e: ReaderError) -> Self {
        match e {
            ReaderError::EmptyInput(_) => CliError::Parse(e.to_string()),
            _ => CliError::Reader(e.to_string()),
        }
    }
}

impl From<ResolveError> for CliError {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::EmptyInput(_) => CliError::Parse(e.to_string()),
            ResolveError::Reader { source, .. } => source.into(),
        }
    }
}
