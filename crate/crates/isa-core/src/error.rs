use std::fmt;
use std::path::PathBuf;

/// Library-wide error type.
///
/// Variants are grouped so a caller (the CLI in particular) can map them to
/// coarse failure classes: configuration misuse, bad input data, or a
/// numerical breakdown during optimization.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration or argument value (e.g. alpha outside [0,1]).
    Config(String),
    /// Tensor/sequence shapes that do not fit together.
    Shape(String),
    /// Filesystem failure while reading or writing an artifact.
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed or inconsistent input data; carries the file line when known.
    Data {
        path: Option<PathBuf>,
        line: Option<usize>,
        msg: String,
    },
    /// Checkpoint file that cannot be decoded (bad magic, version, shape table, truncation).
    Checkpoint { path: Option<PathBuf>, msg: String },
    /// Non-finite loss or gradient encountered during training.
    Numeric(String),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line: None,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
            Error::Data { path, line, msg } => {
                write!(f, "data error")?;
                if let Some(p) = path {
                    write!(f, " in {}", p.display())?;
                }
                if let Some(l) = line {
                    write!(f, " at line {l}")?;
                }
                write!(f, ": {msg}")
            }
            Error::Checkpoint { path, msg } => {
                write!(f, "checkpoint error")?;
                if let Some(p) = path {
                    write!(f, " in {}", p.display())?;
                }
                write!(f, ": {msg}")
            }
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
