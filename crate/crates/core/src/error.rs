use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("negative mass {mass} at index {index}")]
    NegativeMass { index: usize, mass: f64 },

    #[error("measure is empty (no point with positive mass)")]
    EmptyMeasure,

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("supports do not match: {0}")]
    SupportMismatch(String),

    #[error("point {index} lies outside the grid by more than one cell")]
    OutsideGrid { index: usize },

    #[error("unequal total masses {0} and {1}; normalize both measures first")]
    UnequalMass(f64, f64),

    #[error("support too large for the brute-force oracle: {0} pairs (max 9)")]
    SupportTooLarge(usize),

    #[error("points are at distance {0} >= pi/2; use the teleport branch")]
    BeyondTransportRange(f64),

    #[error("inconsistent decomposition: {0}")]
    InconsistentDecomposition(String),

    #[error("tangent data outside the exponential map domain: {0}")]
    OutsideExpDomain(String),

    #[error("singular part of sample {sample} has mass {mass:.3e}; widen the reference measure")]
    SingularPart { sample: usize, mass: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
