//! Workbench-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the data, model, attack, and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents violate the expected format.
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    /// Archive payload fails its checksum or structural checks.
    #[error("corrupt archive: {0}")]
    Corrupt(String),

    /// Archive was written by an incompatible format version.
    #[error("unsupported archive version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    /// Inputs are structurally inconsistent (lengths, label ranges, class
    /// coverage, ...).
    #[error("inconsistent data: {0}")]
    Data(String),

    /// Tensor or matrix shape disagreement.
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    /// A configuration value is outside its legal range.
    #[error("invalid {name}: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    /// An index refers outside the structure it addresses.
    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// A numeric invariant broke (non-finite value, degenerate scale, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error(
        "no convergence after {iterations} iterations: residual {residual:.3e} > tolerance {tolerance:.3e} in {stage}"
    )]
    Convergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
}

impl Error {
    /// Shorthand for [`Error::Io`] with a path attached.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Shorthand for [`Error::Format`].
    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
