use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point is not a member of the feasible set")]
    NotFeasible,

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    #[error("operation requires a bounded feasible set")]
    Unbounded,

    #[error("unsupported set variant for {0}")]
    UnsupportedSet(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem has no known solution")]
    MissingSolution,

    #[error("problem has no stochastic oracle")]
    MissingOracle,

    #[error("problem has no exact operator available")]
    MissingExactOperator,

    #[error("incompatible block partition: {0}")]
    IncompatiblePartition(String),

    #[error("no convergence within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("trajectory does not hold the required data: {0}")]
    Trajectory(String),

    #[error("schedule fails its side conditions: {0}")]
    ScheduleValidation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
