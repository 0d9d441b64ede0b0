use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("subsystem index {index} out of range ({count} subsystems)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular KKT system: size {size}, numerical rank {rank}, smallest pivot ratio {pivot_ratio:e}")]
    SingularKkt {
        size: usize,
        rank: usize,
        pivot_ratio: f64,
    },

    #[error("QP solver hit {iterations} iterations (primal residual {primal:e}, dual residual {dual:e})")]
    QpMaxIterations {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("QP infeasible after {iterations} iterations (certificate residual {certificate:e})")]
    QpInfeasible { iterations: usize, certificate: f64 },

    #[error("local achievability system of subsystem {subsystem} is inconsistent (residual {residual:e})")]
    InconsistentProjector { subsystem: usize, residual: f64 },

    #[error("subsystem {subsystem} failed at iteration {iteration}: {source}")]
    Subproblem {
        subsystem: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ADMM stopped after {iterations} iterations without converging (primal {primal:e}, dual {dual:e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
        /// Per-iteration (max primal, max dual) residuals.
        history: Vec<(f64, f64)>,
    },

    #[error("consensus loop stopped after {iterations} inner iterations at outer iteration {outer} (residual {residual:e})")]
    ConsensusNotConverged {
        outer: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("closed loop halted at step {step}: {source}")]
    Halted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("response is not causal: block ({row_block}, {col_block}) above the diagonal is nonzero")]
    NonCausal { row_block: usize, col_block: usize },

    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_subsystem(self, subsystem: usize, iteration: usize) -> Self {
        Error::Subproblem {
            subsystem,
            iteration,
            source: Box::new(self),
        }
    }
}
