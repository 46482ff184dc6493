use thiserror::Error;

/// Errors raised by estimator construction, solving and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LueError {
    #[error("invalid exposure spec: {0}")]
    InvalidSpec(String),

    #[error("exposure {exposure} is outside the exposure set {levels:?}")]
    ExposureOutOfRange { exposure: String, levels: Vec<usize> },

    #[error("exposure mapping `{0}` requires a network")]
    MissingNetwork(&'static str),

    #[error("unit {unit} out of range for {n} units")]
    UnitOutOfRange { unit: usize, n: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unit {unit} has in-degree 0; its interference estimand is undefined")]
    DegenerateUnit { unit: usize },

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("exhaustive enumeration over {n} units exceeds the budget of {max}")]
    EnumerationBudget { n: usize, max: usize },

    #[error("exposure {0} has zero or missing probability")]
    MissingProbability(String),

    #[error("exposure {0} has zero outcome variance under the prior")]
    ZeroVariance(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("limit sequence did not converge: last step changed weights by {last_change:e}")]
    NonConvergence { last_change: f64 },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("estimator is not in the span of the basis (residual {residual:e})")]
    NotInSpan { residual: f64 },

    #[error("basis is degenerate (augmented rank {rank} < {expected})")]
    DegenerateBasis { rank: usize, expected: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LueError>;
