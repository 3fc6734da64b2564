// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Parse failures for the line-oriented text formats (DRPC, poses, registry).
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("unsupported version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },
    #[error("line {line}: malformed header: {reason}")]
    Header { line: usize, reason: String },
    #[error("record {record} (line {line}): {reason}")]
    Record { record: usize, line: usize, reason: String },
    #[error("truncated input: expected {expected} records, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: file says {expected:016x}, content hashes to {actual:016x}")]
    Checksum { expected: u64, actual: u64 },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    ParseInline(#[from] ParseError),
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Malformed(_) | Error::Input(_) | Error::Parse { .. } | Error::ParseInline(_) | Error::Io { .. } => 2,
            Error::Config(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}
