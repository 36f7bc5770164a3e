//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (out-of-range level, bad scenario field, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Mesh-quality failure (degenerate triangle, broken closure).
    #[error("mesh quality error: {0}")]
    MeshQuality(String),

    /// Dimension or case-tag mismatch between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Mesh-to-mesh interpolation failure.
    #[error("interpolation error: {0}")]
    Interpolation(String),

    /// Linear solve failed inside a time-stepping loop; carries the step index.
    #[error("linear solver failure at step {step}: {message}")]
    Solver { step: usize, message: String },

    /// Numerical failure outside the PDE steppers (smoothers, norm estimate).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Evaluation requested without the data it needs (e.g. ground truth).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// File format / parse failure.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
