//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, estimation, and fitting routines.
#[derive(Debug, Error)]
pub enum MfpcaError {
    /// A grid axis is empty, too short, non-finite, or not strictly increasing.
    #[error("invalid grid axis {axis}: {reason}")]
    InvalidAxis { axis: usize, reason: String },

    /// A value tensor does not match the shape of its grid.
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An observed sample value is NaN or infinite.
    #[error("non-finite value in feature {feature}, observation {observation}")]
    NonFiniteValue { feature: usize, observation: usize },

    /// Observation weights are not positive or do not sum to one.
    #[error("invalid observation weights: {0}")]
    InvalidWeights(String),

    /// Feature weights are not strictly positive and finite.
    #[error("invalid feature weights: {0}")]
    InvalidFeatureWeights(String),

    /// Dataset-level structural problem (feature/observation counts, etc.).
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// An operation that requires dense data received masked data.
    #[error("{op} requires dense data; feature {feature} has missing values (interpolate or smooth first)")]
    RequiresDense { op: &'static str, feature: usize },

    /// No observed data covers a required grid point.
    #[error("no observed data at feature {feature}, flat grid index {index}")]
    InsufficientCoverage { feature: usize, index: usize },

    /// A curve has no observed points at all.
    #[error("observation {observation} of feature {feature} has no observed points")]
    EmptyCurve { feature: usize, observation: usize },

    /// A feature has (numerically) zero variance where positive variance is needed.
    #[error("degenerate feature {feature}: {reason}")]
    DegenerateFeature { feature: usize, reason: String },

    /// A linear system could not be solved.
    #[error("singular system in {op}: {hint}")]
    SingularSystem { op: &'static str, hint: String },

    /// Eigendecomposition failed to converge.
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    /// An argument is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// File I/O or format problem while reading/writing CSV artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A CSV file did not match the documented layout.
    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, MfpcaError>;
