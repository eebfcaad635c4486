use thiserror::Error;

use crate::plan::Diagnostic;
use crate::plan::microstep::Violation;
use crate::record::{Key, Record};

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

/// Error raised by a user-defined function.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct UdfError(pub String);

impl UdfError {
    pub fn new(msg: impl Into<String>) -> Self {
        UdfError(msg.into())
    }
}

pub type UdfResult = std::result::Result<(), UdfError>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("key index {index} out of range for record of arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },

    #[error("NaN value in key field {index}")]
    NanKey { index: usize },

    #[error("udf of operator `{operator}` failed on {record}: {source}")]
    UdfFailure {
        operator: String,
        record: Record,
        source: UdfError,
    },

    #[error("iteration did not terminate within {limit} supersteps")]
    IterationLimitExceeded { limit: u64 },

    #[error("plan is not eligible for microstep execution: {0:?}")]
    EligibilityViolation(Vec<Violation>),

    #[error("delta set contains several records for key {key} and no comparator is defined")]
    DuplicateDeltaKey { key: Key },

    #[error("invalid plan: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Diagnostic>),

    #[error("no physical plan type-checks")]
    EmptyEnumeration,

    #[error("missing input dataset `{0}`")]
    MissingInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{count} delta records were produced on a worker that does not own their key")]
    LocalityViolation { count: u64 },

    #[error("cache spill failed: {0}")]
    Spill(String),

    #[error("worker panicked: {0}")]
    WorkerPanic(String),

    /// Raised on workers that stopped because a peer failed.
    #[error("execution aborted after a failure on another worker")]
    Aborted,
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Spill(e.to_string())
    }
}
