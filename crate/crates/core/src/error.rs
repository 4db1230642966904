//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value fed to an operation violates its preconditions
    /// (out-of-range label, non-finite feature, empty input, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An inconsistent or impossible configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite values where finite arithmetic was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The peer group-assignment grammar rejected its input.
    /// `position` is the byte offset of the offending character.
    #[error("peer spec error at position {position}: {message}")]
    PeerSpec { position: usize, message: String },

    /// A structured text file failed to parse. `line` is 1-based;
    /// line 1 is the header.
    #[error("{path}:{line}: {message}")]
    FileFormat {
        path: String,
        line: usize,
        message: String,
    },

    /// Training could not make progress (typically a non-finite loss).
    #[error("training error (peer {peer}, epoch {epoch}): {message}")]
    Training {
        peer: usize,
        epoch: usize,
        message: String,
    },

    /// A pipeline stage failed; wraps the underlying error with the
    /// stage name so CLI output points at the failing step.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Attaches the offending path to a bare I/O error, which otherwise
/// reports only the OS message.
pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

impl Error {
    /// Tags an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
