//! Error type shared across the pipeline.

use thiserror::Error;

/// Unified error for every stage of the pipeline.
///
/// The variants partition failures by contract: `Format` means the bytes of
/// an artifact are malformed, `Data` means well-formed bytes carry values
/// that violate an invariant, and the rest map one-to-one onto the
/// preconditions of the operations that raise them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
