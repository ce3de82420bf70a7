use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({row}, {col}) outside a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("singular matrix at pivot row {pivot_row}")]
    Singular { pivot_row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("conflicting constraints on dof {dof}")]
    ConstraintConflict { dof: usize },
    #[error("meshes do not share a forest")]
    ForestMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("NO_CONVERGENCE after {iterations} Newton iterations, residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("LINE_SEARCH_STALL at Newton iteration {iteration}, residual {residual:.3e}")]
    LineSearchStall { iteration: usize, residual: f64 },
    #[error("ACTIVE_SET_CYCLE at Newton iteration {iteration}")]
    ActiveSetCycle { iteration: usize },
    #[error("loading step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("adaptive cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Innermost error, stripping step and cycle annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } | Error::Cycle { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
