//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator and calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or index mismatch between operands.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A scalar argument is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix expected to be unitary is not, within tolerance.
    #[error("matrix is not unitary: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    NotUnitary { defect: f64, tolerance: f64 },

    /// Non-finite value (NaN or infinity) where a finite number is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A fringe scan carries too little structure to fit.
    #[error("degenerate fringe scan: {0}")]
    DegenerateScan(String),

    /// The requested phase vector cannot be realized within power limits.
    #[error("infeasible power assignment on heaters {heaters:?}: {reason}")]
    InfeasiblePowers { heaters: Vec<usize>, reason: String },

    /// The model fit failed to make progress or diverged.
    #[error("fit failed: {reason} (loss trace: {trace:?})")]
    FitFailed { reason: String, trace: Vec<f64> },

    /// Not enough measurement data for the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A linear system could not be solved (singular or not positive definite).
    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    /// Mismatched device/model artifacts (layout hash or schema version).
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// Configuration rejected at parse or validation time.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::ShapeMismatch(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::ArtifactMismatch(_) => 4,
            _ => 3,
        }
    }
}
