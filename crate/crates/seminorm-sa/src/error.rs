use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigenvalue {re}{im:+}i lies within {tol} of the classification boundary")]
    BoundaryEigenvalue { re: f64, im: f64, tol: f64 },

    #[error("no PSD-with-kernel solution: {0}")]
    NoLyapunovSolution(String),

    #[error("kernel bases span different subspaces")]
    KernelMismatch,

    #[error("stochastic matrix invalid: {0}")]
    BadStochasticMatrix(String),

    #[error("chain is reducible or periodic: {0}")]
    NonErgodicChain(String),

    #[error("mixing time exceeds cap {cap} at accuracy {delta}")]
    MixingTimeCap { cap: usize, delta: f64 },

    #[error("stepsize out of admissible range: {0}")]
    StepsizeOutOfRange(String),

    #[error("iteration diverged: {0}")]
    Diverged(String),

    #[error("singular restricted system: {0}")]
    SingularSystem(String),

    #[error("minimization failed to converge: {0}")]
    NonConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
