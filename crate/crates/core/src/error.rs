use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("induced Markov chain is not unichain: {0}")]
    NonErgodicChain(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("{policies} deterministic policies exceed the enumeration guard of {limit}")]
    TooLargeToEnumerate { policies: f64, limit: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("horizon must be at least 2, got {0}")]
    InvalidHorizon(u64),

    #[error("quantum sample {id} was already measured")]
    DoubleConsumption { id: u64 },

    #[error("samples span more than one state-action pair")]
    MixedKeys,

    #[error("sample buffer belongs to epoch {buffer}, expected epoch {expected}")]
    StaleBuffer { buffer: usize, expected: usize },

    #[error("confidence radius must be positive, got {radius} at (s={state}, a={action})")]
    InvalidRadius { state: usize, action: usize, radius: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("LP solver failure: {0}")]
    NumericalFailure(String),

    #[error("records cover {got} steps, requested {want}")]
    MismatchedHorizon { got: usize, want: usize },

    #[error("slope window holds {0} points, need at least 10")]
    DegenerateWindow(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
