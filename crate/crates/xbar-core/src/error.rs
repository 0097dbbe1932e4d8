//! Error type shared by every module in the crate.

use crate::device::TechNodeParams;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A technology-node label was requested that is neither built in nor
    /// defined by a loaded config file.
    #[error("unknown technology node `{0}`")]
    UnknownNode(String),

    /// A parameter record violated its invariants (non-positive resistance,
    /// inverted conductance window, ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Matrix / vector dimensions do not match the operation's contract.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A numeric argument fell outside its documented range.
    #[error("value out of range: {0}")]
    OutOfRange(String),

    /// Operation applied to an array in the wrong state (e.g. embedding a
    /// watermark twice).
    #[error("invalid state: {0}")]
    State(String),

    /// The linear solver could not reach the required residual.
    #[error("solver failed: {reason} (relative residual {residual:.3e} after {iterations} iterations)")]
    Solver {
        reason: String,
        residual: f64,
        iterations: usize,
    },

    /// An overhead report was requested for a group with no baseline run.
    #[error("missing baseline result for node `{node}` size {rows}x{cols}")]
    MissingBaseline {
        node: String,
        rows: usize,
        cols: usize,
    },

    /// A sweep cell failed; identifies which one.
    #[error("cell {node} {rows}x{cols} {config}: {source}")]
    Cell {
        node: String,
        rows: usize,
        cols: usize,
        config: String,
        source: Box<Error>,
    },

    /// Calibration exhausted its budget above the acceptable residual. The
    /// best parameters found so far are carried along for inspection.
    #[error("calibration failed: residual {residual:.4} exceeds 0.5 (achieved current drop {:.2}%, delay +{:.2}%, power +{:.2}%)", .achieved[0], .achieved[1], .achieved[2])]
    CalibrationFailed {
        best: Box<TechNodeParams>,
        residual: f64,
        achieved: [f64; 3],
    },

    /// Malformed input file (IDX, CSV, config, key string, ...).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
