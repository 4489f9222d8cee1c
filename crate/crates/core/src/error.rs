use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("restricted Hessian is not positive definite on {size} active coordinates")]
    SingularSubproblem { size: usize },

    #[error("non-positive diagonal entry G[{index}][{index}] = {value}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("exchange size {requested} exceeds available set size {available}")]
    ExchangeTooLarge { requested: usize, available: usize },

    #[error("{count} candidate supports exceed the enumeration limit {limit}")]
    TooManySubsets { count: u128, limit: u128 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{rows} rows cannot be split evenly across {machines} machines")]
    IndivisibleN { rows: usize, machines: usize },

    #[error("machine {machine}: restricted normal matrix on {size} columns is singular (n = {n})")]
    RankDeficient { machine: usize, size: usize, n: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("residual sum of squares is not positive ({rss})")]
    DegenerateResidual { rss: f64 },

    #[error("covariance factorization failed")]
    FactorizationFailure,

    #[error("true coefficient vector has zero signal variance")]
    ZeroSignal,

    #[error("index {index} out of range for dimension {p}")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("relative error undefined for a zero true coefficient vector")]
    ZeroTruth,

    #[error("every sparsity level in the sweep failed; first error: {0}")]
    SweepFailed(Box<Error>),
}
