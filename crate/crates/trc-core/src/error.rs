//! Error types shared across the crate.

use crate::solver::SolveReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum TrcError {
    /// Two tensors (or a tensor and a matrix) disagree in shape.
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    /// A multi-index fell outside the tensor bounds.
    #[error("index {index:?} out of bounds for dims {dims:?}")]
    IndexOutOfBounds { index: Vec<usize>, dims: Vec<usize> },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration file or parameter string could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// The SVD (or another numeric kernel) failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The solver produced non-finite values; the partial report is attached.
    #[error("solver diverged at iteration {}", report.iterations)]
    Diverged { report: Box<SolveReport> },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A binary or text file did not match its expected format.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, TrcError>;

impl TrcError {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        TrcError::ShapeMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
