//! Error type shared by the solver stack.

use thiserror::Error;

/// Everything that can go wrong in a solver or a check, in one enum so the
/// CLI can map failures onto exit codes without downcasting.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Fixed-point sweep kept expanding; the caller is expected to shrink the
    /// window and retry.
    #[error("no contraction: iteration ratio {ratio:.3} on a window of length {window:.3e}")]
    NoContraction { ratio: f64, window: f64 },

    #[error("adaptive step underflow at x = {x:.6e} (step {step:.3e})")]
    StepUnderflow { x: f64, step: f64 },

    #[error("shooting bracket invalid: {0}")]
    BracketInvalid(String),

    #[error("relaxation did not converge within {sweeps} sweeps (last change {change:.3e})")]
    NoConvergence { sweeps: usize, change: f64 },

    #[error("descent exceeded {max_iter} iterations (residual norm {residual:.3e})")]
    MaxIterations { max_iter: usize, residual: f64 },

    #[error("line search found no sufficient decrease down to step {step:.3e}")]
    LineSearchFailure { step: f64 },

    /// A comparison-principle check was asked to certify a conclusion whose
    /// hypotheses fail; reported instead of silently passing.
    #[error("comparison hypotheses violated: {0}")]
    HypothesisViolated(String),

    #[error("profiles do not cross: {0}")]
    NoCrossing(String),

    #[error("fit window too small: {0}")]
    WindowTooSmall(String),

    #[error("fit window holds no usable nodes: {0}")]
    WindowEmpty(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Parse(String),
}

impl SolverError {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        SolverError::InvalidInput(msg.into())
    }
}
