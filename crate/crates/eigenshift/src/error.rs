//! Error taxonomy shared across the toolkit.
//!
//! Variants are grouped by how the CLI maps them to exit codes: usage and
//! I/O problems exit 2, invalid or degenerate data exits 3.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Container or report data violates the format contract (bad header,
    /// overlapping ranges, unsupported dtype, ...). Messages carry byte
    /// offsets where the violation is positional.
    #[error("invalid data: {0}")]
    Format(String),

    #[error("entry not found: {0}")]
    EntryNotFound(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Caller-supplied parameters are unusable (conflicting selectors,
    /// out-of-range indices, k > d, non-positive temperature, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Structurally valid data that the requested computation cannot use
    /// (single-class labels, empty corpus, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("svd did not converge after {sweeps} sweeps (max off-diagonal ratio {residual:.3e})")]
    Convergence { sweeps: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for usage/IO, 3 for invalid data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::EntryNotFound(_) | Error::InvalidArgument(_) => 2,
            Error::Format(_)
            | Error::Shape(_)
            | Error::Degenerate(_)
            | Error::NonFinite(_)
            | Error::Convergence { .. } => 3,
        }
    }
}
