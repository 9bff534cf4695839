use alloc::string::String;

pub type CoreResult<T> = Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Fernholz drift evaluated at or beyond its log pole.
    #[error("drift singularity: largest weight {max_weight} >= 1 - delta = {bound}")]
    Singularity { max_weight: f64, bound: f64 },
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error("acceptance too rare: {accepted}/{attempts} accepted (rate estimate {rate})")]
    AcceptanceTooRare {
        attempts: usize,
        accepted: usize,
        rate: f64,
    },
    #[error("portfolio value factor {factor} <= 0 at step {step}; refine the grid")]
    StepSize { step: usize, factor: f64 },
    #[error("tube violated with slack {slack} at t = {time}")]
    TubeViolation { slack: f64, time: f64 },
    /// No strictly positive martingale weights exist at a node.
    #[error("no martingale tilt exists at node {node}: {reason}")]
    NoTilt { node: usize, reason: String },
    #[error("numerical tilt error at node {node}: residual {residual}")]
    NumericalTilt { node: usize, residual: f64 },
    #[error("volatility bounds violated: {0}")]
    ModelContract(String),
    #[error("time change is not invertible at step {step}")]
    TimeChange { step: usize },
}

pub(crate) fn domain(msg: impl Into<String>) -> CoreError {
    CoreError::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> CoreError {
    CoreError::Precondition(msg.into())
}
