use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid uncertainty specification: {0}")]
    Uncertainty(String),

    #[error("quadrature rule needs at least one node")]
    EmptyQuadrature,

    #[error("sample count {got} does not match scenario count {expected}")]
    SampleLength { expected: usize, got: usize },

    #[error("basis index {index} out of range (basis has {len} terms)")]
    BasisIndex { index: usize, len: usize },

    #[error("touchdown interpolation needs z_prev > 0 >= z_next, got z_prev={prev}, z_next={next}")]
    NotBracketing { prev: f64, next: f64 },

    #[error("invalid integration settings: {0}")]
    Integration(String),

    #[error("kriging: {0}")]
    Kriging(String),

    #[error("invalid GA configuration: {0}")]
    GaConfig(String),

    #[error("invalid run configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("output directory {0} is not empty (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("missing run artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
