use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state contains a non-finite component after integration")]
    NonFiniteState,
    #[error("non-finite control input")]
    NonFiniteInput,
    #[error("unknown constraint id: {0}")]
    UnknownConstraint(String),
    #[error("strengthening coefficients must be non-negative and not both zero")]
    InvalidCoefficients,
    #[error("barrier row has a zero control gradient")]
    DegenerateGradient,
    #[error("QP solver hit the iteration limit (primal residual {primal:.3e})")]
    MaxIter { primal: f64 },
    #[error("QP is infeasible: a hard constraint row conflicts with the control bounds")]
    Infeasible,
    #[error("no feasible initial quaternion found after {0} resamples")]
    InitFeasibilityExhausted(usize),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("Riccati iteration diverged")]
    RiccatiDivergence,
    #[error("empty sample")]
    EmptySample,
    #[error("policy bridge timed out waiting for an action")]
    BridgeTimeout,
    #[error("malformed action from policy bridge: {0}")]
    MalformedAction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
