use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("node index {0} out of range")]
    NodeIndex(usize),

    #[error("invalid domain (line {line}): {message}")]
    InvalidDomain { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("radius {0} is below graph resolution")]
    BelowResolution(f64),

    #[error("compatibility defect {defect}")]
    Compatibility { defect: f64 },

    #[error("theory inapplicable for this regime: {0}")]
    TheoryInapplicable(String),

    #[error("empty exponent window: lower {lower} > upper {upper}")]
    EmptyWindow { lower: f64, upper: f64 },

    #[error("instance too large for brute-force oracle ({nodes} nodes, limit {limit})")]
    TooLarge { nodes: usize, limit: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, last: Box<crate::solver::Solution> },

    #[error("hypothesis refused: {0}")]
    Refused(String),

    #[error("all sampled fields were constant")]
    AllConstant,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
