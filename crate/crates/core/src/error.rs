use thiserror::Error;

/// Errors raised by kernel construction, the solvers and the checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("invalid kernel at row {row}: {reason}")]
    InvalidKernel { row: usize, reason: String },

    #[error("invalid generator at row {row}: {reason}")]
    InvalidGenerator { row: usize, reason: String },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid state function: {0}")]
    InvalidStateFn(String),

    #[error("arithmetic produced NaN in {0}")]
    NaN(&'static str),

    #[error("support condition violated: mass flows into zero-weight atom {atom} ({label})")]
    SupportViolated { atom: usize, label: String },

    #[error("measure is not a probability (mass = {0})")]
    NotProbability(f64),

    #[error("measure is not invariant (residual = {0:e})")]
    NotInvariant(f64),

    #[error("discrete semigroup evaluated at non-integer time {0}")]
    NonIntegerTime(f64),

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("empty range: N0 = {n0} > N = {n}")]
    EmptyRange { n0: usize, n: usize },

    #[error("set function is not concave nondecreasing with phi(0) = 0: {0}")]
    NonConcavePhi(String),

    #[error("value {0} is outside the range of phi")]
    OutsidePhiRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("unknown state label {0:?}")]
    UnknownState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
