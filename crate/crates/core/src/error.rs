use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MessError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("covariance is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance is near-singular (factor diagonal ratio {ratio:e})")]
    NearSingular { ratio: f64 },

    #[error("conditioning block is singular")]
    SingularConditioning,

    #[error("invalid conditioning index {index} for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },

    #[error("likelihood returned {value} at proposal {index}")]
    InvalidLikelihood { index: usize, value: f64 },

    #[error("rejected angle {angle} lies outside bracket ({left}, {right}]")]
    AngleOutsideBracket { angle: f64, left: f64, right: f64 },

    #[error("shrink iteration cap of {cap} exceeded")]
    ShrinkCapExceeded { cap: usize },

    #[error("transition matrix needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series has zero variance")]
    ConstantSeries,

    #[error("series too short: need at least {min}, got {len}")]
    SeriesTooShort { min: usize, len: usize },

    #[error("MH tuning failed: closest acceptance rate {closest_rate:.4} at scale {scale:e}")]
    TuningFailed { closest_rate: f64, scale: f64 },

    #[error("step {iteration} failed: {source}")]
    StepFailed {
        iteration: usize,
        #[source]
        source: Box<MessError>,
    },
}

pub type Result<T> = std::result::Result<T, MessError>;
