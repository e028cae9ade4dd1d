use thiserror::Error;

/// Errors raised by structure, law, functional and cohomology operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("observables {0} and {1} have no common refinement in the structure")]
    NoCommonRefinement(String, String),

    #[error("meet of {0} and {1} is not an object of the structure")]
    MeetAbsent(String, String),

    #[error("no arrow {0} -> {1} in the structure")]
    InvalidArrow(String, String),

    #[error("invalid sector structure: {0}")]
    InvalidSector(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("conditioning on an outcome of zero marginal mass")]
    ZeroMassFiber,

    #[error("budget {requested} is below the minimum {minimum}")]
    BudgetTooSmall { requested: usize, minimum: usize },

    #[error("covariance is singular on the carrier")]
    SingularCovariance,

    #[error("functional expects a gaussian law, got {0}")]
    NotGaussian(&'static str),

    #[error("conditional average does not stabilise: {0}")]
    DivergentAction(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("closure exceeded the size cap ({cap} points)")]
    ClosureExplosion { cap: usize },

    #[error("{path}: {source}")]
    Input { path: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
