use thiserror::Error;

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not assigned")]
    Unassigned(String),
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: &'static str },
    #[error("division by zero in `{subexpr}`")]
    DivisionByZero { subexpr: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("metric is structurally degenerate (det g is identically zero)")]
    DegenerateMetric,
    #[error("metric is singular at ({0}, {1})")]
    SingularMetric(f64, f64),
    #[error("normalization violated: {0}")]
    Normalization(String),
    #[error("unsupported system size n = {n}: {reason}")]
    UnsupportedSize { n: usize, reason: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("coinciding velocities v{0} and v{1} at the evaluation point")]
    CoincidingVelocities(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("domain violation during Newton iteration: {0}")]
    DomainViolation(EvalError),
    #[error("unconverged interior nodes: {0}")]
    Unconverged(usize),
    #[error("unknown example `{id}`; available: {available}")]
    UnknownExample { id: String, available: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
