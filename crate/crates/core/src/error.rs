use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("capacity exceeded: {needed} points requested, limit {limit}")]
    Capacity { needed: usize, limit: usize },
    #[error("invalid epsilon {eps}: must satisfy 0 <= eps < 1/(2d) = {bound}")]
    InvalidEpsilon { eps: f64, bound: f64 },
    #[error("environment format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("degenerate smoothing field: {0}")]
    DegenerateField(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("symmetry violation: {0}")]
    SymmetryViolation(String),
    #[error("substochastic row at state {0} rejected")]
    Substochastic(usize),
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("walk step cap {0} exceeded")]
    WalkLimit(u64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
