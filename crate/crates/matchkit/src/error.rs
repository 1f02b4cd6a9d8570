use thiserror::Error;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data.
    Data,
    /// A solver or iteration failed to produce a trustworthy result.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("json: {0}")]
    Json(String),

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("attribute index out of range: ({i},{j}) for dims {k}x{l} (indices are 1-based)")]
    IndexOutOfRange { i: usize, j: usize, k: usize, l: usize },

    #[error("output function not evaluable at x={x:?}, y={y:?}: {reason}")]
    QEval { x: Vec<f64>, y: Vec<f64>, reason: String },

    #[error("unbalanced market: firm mass {firms} vs worker mass {workers}")]
    UnbalancedMarket { firms: f64, workers: f64 },

    #[error("instance too large for exhaustive enumeration: {units} units per side (limit {limit})")]
    InstanceTooLarge { units: u64, limit: u64 },

    #[error("matchings do not share marginals: {context}")]
    MarginalMismatch { context: String },

    #[error("insufficient mass at cell x={x:?}, y={y:?}: have {have}, need {need}")]
    InsufficientMass { x: Vec<f64>, y: Vec<f64>, have: f64, need: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("all pairs tied: gamma is undefined")]
    AllPairsTied,

    #[error("iteration did not converge within {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("kernel overflow: exp argument {arg} from Q value {q}")]
    KernelOverflow { arg: f64, q: f64 },

    #[error("zero density at x={x:?}, y={y:?}")]
    ZeroDensity { x: Vec<f64>, y: Vec<f64> },

    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("search budget exceeded after {nodes} nodes; result is inconclusive")]
    BudgetExceeded { nodes: u64 },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("non-finite objective at parameters {at:?}")]
    NonFiniteObjective { at: Vec<f64> },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Json(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::QEval { .. }
            | Error::UnbalancedMarket { .. }
            | Error::MarginalMismatch { .. }
            | Error::InsufficientMass { .. }
            | Error::InvalidInput(_)
            | Error::EmptyData(_)
            | Error::SupportViolation(_)
            | Error::AllPairsTied => ErrorKind::Data,
            Error::InstanceTooLarge { .. }
            | Error::NonConvergence { .. }
            | Error::KernelOverflow { .. }
            | Error::ZeroDensity { .. }
            | Error::LpFailure(_)
            | Error::BudgetExceeded { .. }
            | Error::NonFiniteObjective { .. } => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
