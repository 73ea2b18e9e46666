use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum ChacError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix encountered during factorization{}", match .pivot {
        Some(p) => format!(" (pivot {p})"),
        None => String::new(),
    })]
    SingularMatrix { pivot: Option<usize> },

    #[error("Newton iteration did not converge after {iters} iterations (residual history: {residuals:?})")]
    NonConvergence { iters: usize, residuals: Vec<f64> },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<ChacError>,
    },

    #[error("level k={level} failed: {source}")]
    LevelFailed {
        level: u32,
        #[source]
        source: Box<ChacError>,
    },

    #[error("mesh lineage mismatch: {0}")]
    LineageMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ChacError>;
