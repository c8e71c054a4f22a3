//! Error type shared across the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Operands of a tensor operation have incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Input outside an operation's domain (e.g. log of a non-positive value).
    Domain { op: &'static str, detail: String },
    /// A caller violated an API precondition.
    Contract(String),
    /// A non-finite value appeared where the contract requires finite numbers.
    NonFinite { what: String },
    /// Fixed-point iteration blew past the divergence guard; `trace_len`
    /// iterations were recorded before the blow-up.
    Diverged {
        step_norm: f64,
        iteration: usize,
        trace_len: usize,
    },
    /// Malformed file content (IDX, checkpoint, config, scenario).
    Format(String),
    /// Probe classifier failed its held-out accuracy floor.
    ProbeQuality { accuracy: f64, floor: f64 },
    /// Grid has no start-to-goal path.
    NoPath,
    /// Dataset or map generation failed.
    Generation(String),
    /// Download failure in the fetch helper.
    Fetch(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "shape mismatch in {op}: {left:?} vs {right:?}")
            }
            Error::Domain { op, detail } => write!(f, "domain error in {op}: {detail}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::Diverged {
                step_norm,
                iteration,
                trace_len,
            } => write!(
                f,
                "iteration diverged: step norm {step_norm:.3e} at iteration {iteration} ({trace_len} recorded)"
            ),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::ProbeQuality { accuracy, floor } => write!(
                f,
                "probe accuracy {accuracy:.4} below floor {floor:.4}; goal-fidelity would be meaningless"
            ),
            Error::NoPath => write!(f, "grid has no path from start to goal"),
            Error::Generation(msg) => write!(f, "generation error: {msg}"),
            Error::Fetch(msg) => write!(f, "fetch error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
