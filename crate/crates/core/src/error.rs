use thiserror::Error;

/// Errors raised by every operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry at position ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("declared rank {declared} does not match numerical rank {numerical}")]
    RankMismatch { declared: usize, numerical: usize },

    #[error("matrix has rank {rank} but full row rank {rows} is required")]
    RankDeficient { rank: usize, rows: usize },

    #[error("singular values {index} and {next} are not separated: gap {gap:e} below {threshold:e}")]
    SingularGap {
        index: usize,
        next: usize,
        gap: f64,
        threshold: f64,
    },

    #[error("svd failed to converge on a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("brute-force budget exceeded: {0}; use the sampled check instead")]
    BudgetExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image error: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kernels, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SvdFailed { .. } | Error::SingularGap { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
