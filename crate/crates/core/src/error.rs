use thiserror::Error;

/// Errors raised by the barrier, geometry, subproblem and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid bounds: lower[{index}] = {lower} is not below upper[{index}] = {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("invalid radius {0}: must be positive")]
    InvalidRadius(f64),
    #[error("argument {0} outside the admissible range")]
    OutOfRange(f64),
    #[error("barrier Hessian could not be factorized at the anchor point")]
    IllConditionedMetric,
    #[error("constraint matrix has numerical rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("reduced KKT system could not be solved")]
    IllConditionedKkt,
    #[error("point is outside the barrier domain")]
    OutsideDomain,
    #[error("reduced barrier Hessian is numerically indefinite")]
    FactorizationFailure,
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("inner loop exceeded {trials} trials at outer iteration {iteration}")]
    InnerLoopExceeded { iteration: usize, trials: usize },
    #[error("non-finite value encountered at outer iteration {iteration}")]
    NonFiniteValue { iteration: usize },
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("objective does not provide second derivatives")]
    MissingHessian,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
