use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// A malformed record in an input file. `line` is 1-based; 0 means the
/// error concerns the file as a whole.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}:{line}: {reason}")]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    pub fn new(file: impl AsRef<Path>, line: usize, reason: impl Into<String>) -> Self {
        Self {
            file: file.as_ref().display().to_string(),
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("knowledge graph is frozen")]
    Frozen,
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
