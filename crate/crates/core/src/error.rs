use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fractional order must lie in (0, 1), got {0}")]
    InvalidOrder(f64),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("spatial grid with {0} interior point(s) is already the coarsest")]
    AlreadyCoarsest(usize),

    #[error("index ({m}, {k}) out of range for {steps} time steps")]
    IndexOutOfRange { m: usize, k: usize, steps: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block is not admissible")]
    NotAdmissible,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Mittag-Leffler series did not converge within {0} terms")]
    SeriesNotConverged(usize),

    #[error("argument {0} outside the supported range")]
    ArgumentOutOfRange(f64),

    #[error("empty error study")]
    EmptyStudy,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
