use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("range between nodes {0} and {1} is missing")]
    MissingRange(usize, usize),

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("imaginary root while placing anchor 2 (z02^2 = {z02_sq:.6} < x^2 = {x_sq:.6})")]
    ImaginaryRoot { z02_sq: f64, x_sq: f64 },

    #[error("{have} references available, {need} required")]
    InsufficientReferences { have: usize, need: usize },

    #[error("least-squares solver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("belief has no remaining probability mass")]
    AllMassZero,

    #[error("node index {index} out of range for a {n}-node network")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("layout infeasible: {0}")]
    LayoutInfeasible(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ground truth is required for this metric")]
    NoTruth,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
