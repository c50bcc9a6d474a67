//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("integration blew up at t = {t:.6e} s: {detail}")]
    BlowUp { t: f64, detail: String },

    #[error("equilibrium search failed: {detail}")]
    NoConvergence { detail: String },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("dataset fingerprints differ: {a} vs {b}")]
    FingerprintMismatch { a: String, b: String },

    #[error("missing file: {0}")]
    MissingFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
