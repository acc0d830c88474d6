use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation outside the domain where a quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input for which the requested quantity is undefined (e.g. a zero denominator).
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Normalized weights span more orders of magnitude than the scalar type can hold.
    #[error(
        "infeasible weights: log-weight span {span:.1} exceeds representable span {limit:.1}; \
         reduce s or coarsen the grid"
    )]
    InfeasibleWeights { span: f64, limit: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
