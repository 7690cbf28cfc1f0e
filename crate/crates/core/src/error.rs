use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("infeasible window: lambda^m = {lambda_pow_m} does not exceed nu = {nu}")]
    InfeasibleWindow { lambda_pow_m: f64, nu: f64 },

    #[error("no feasible safeguards found after {rounds} rounds (last margins {last_margins:?})")]
    SearchExhausted { rounds: usize, last_margins: Vec<f64> },

    #[error("small-gain hypothesis violated: gamma1 * gamma2 = {0} is not in [0, 1)")]
    HypothesisViolated(f64),

    #[error("reference solver failed: {0}")]
    ReferenceFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
