use thiserror::Error;

/// Errors produced while evaluating models, chains, controllers or verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in `{op}`: argument {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("gradient evaluation failed at coordinate {coordinate}")]
    Gradient {
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown parameter `{name}` for model `{model}`")]
    UnknownParam { model: String, name: String },

    #[error("invalid input set: {0}")]
    InputSet(String),

    #[error("invalid class-K function: {0}")]
    KappaSpec(String),

    #[error("class-K evaluation failed at chain level {level}")]
    Kappa {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid barrier chain: {0}")]
    ChainSpec(String),

    #[error("chain needs autodiff depth {required} but the configured limit is {max}")]
    DepthLimit { required: u32, max: u32 },

    #[error("barrier level {level} out of range 0..={max}")]
    Level { level: usize, max: usize },

    #[error("invalid QP: {0}")]
    QpSpec(String),

    #[error("QP infeasible at state {state:?}")]
    QpInfeasible { state: Vec<f64> },

    #[error("no sample of the domain landed in C* within budget {budget}")]
    EmptyCStar { budget: usize },

    #[error("verification budget {budget} below minimum {min}")]
    Budget { budget: usize, min: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
