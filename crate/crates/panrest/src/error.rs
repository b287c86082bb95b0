//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by raster I/O, parameter validation and the processing
/// operators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying file-system failure (open, read, write, create).
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file does not start with a valid MBR/PGM/PPM header.
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    /// The sample payload does not match the header-declared size.
    #[error("{}: expected {expected} bytes of samples, found {found}",
            if found < expected { "truncated payload" } else { "oversized payload" })]
    PayloadSize { expected: u64, found: u64 },

    /// Header dimensions overflow the addressable sample count.
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    /// Raster data contains NaN or infinite samples.
    #[error("non-finite data: {0}")]
    NonFiniteData(String),

    /// Two rasters that must share a shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter violates its documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input is degenerate for the requested operation (constant PAN,
    /// zero-mean band, all blocks skipped, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Operation only defined for a specific number of bands.
    #[error("unsupported band count: expected {expected}, got {actual}")]
    UnsupportedBandCount { expected: usize, actual: usize },
}

impl Error {
    /// Stable one-word category used by the command-line front end to map
    /// errors onto exit codes and machine-parsable diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            _ => "invariant",
        }
    }

    /// Wrap a file-system failure with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
