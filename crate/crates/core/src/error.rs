use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the strict interior: c[{index}] = {value:e} >= 0")]
    Domain { index: usize, value: f64 },

    #[error("slack s[{index}] = {value:e} is not positive")]
    NonPositiveSlack { index: usize, value: f64 },

    #[error("missing oracle: {0}")]
    MissingOracle(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is rank deficient: numerical rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("linear system is singular to working precision ({0})")]
    SingularSystem(&'static str),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid Lipschitz estimates: {0}")]
    InvalidEstimates(String),

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("segment left the neighborhood after {halvings} halvings of gamma")]
    NeighborhoodViolation { halvings: usize },

    #[error("least-squares residual {residual:e} exceeds {threshold:e}")]
    LeastSquaresResidualTooLarge { residual: f64, threshold: f64 },

    #[error("iteration limit of {0} exceeded")]
    IterationLimitExceeded(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
