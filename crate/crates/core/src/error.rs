use thiserror::Error;

/// Errors raised across the frame design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericsFailure(String),

    #[error("rank deficient: smallest singular value {smallest:.3e} vs largest {largest:.3e}")]
    RankDeficient { smallest: f64, largest: f64 },

    /// The interior-point solver hit its iteration cap; the best iterate is
    /// kept so callers can decide whether to use it.
    #[error("subproblem solver stalled after {iterations} iterations (gap {gap:.3e})")]
    SolverStall { iterations: usize, gap: f64, best: Box<crate::subproblem::SubproblemSolution> },

    #[error("vector {0} is collinear with another frame vector")]
    DegenerateVector(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
