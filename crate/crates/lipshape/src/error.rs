use thiserror::Error;

/// Errors produced by mesh construction, solvers, and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A mesh invariant failed (orientation, conformity, containment, ...).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// An index or argument outside its valid range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A deformation produced a non-positive triangle area or pushed a
    /// vertex outside the hold-all; the field passed to `deform` was not
    /// admissible.
    #[error("deformation constraint violated: {0}")]
    ConstraintViolation(String),

    /// Conjugate gradients did not reach the requested residual.
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    /// Newton's method for the state equation failed.
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    /// The inner solver of the direction subproblem failed.
    #[error("direction subproblem did not converge (p = {p}, gradient norm {gradient_norm:.3e})")]
    DirectionNoConvergence { p: u32, gradient_norm: f64 },

    /// The Armijo backtracking exhausted its step budget.
    #[error("Armijo exhausted {max_backtracks} backtracks at iteration {iteration}")]
    ArmijoExhausted {
        iteration: usize,
        max_backtracks: usize,
    },

    /// Problem data failed a consistency check.
    #[error("problem data inconsistent: field `{field}`: {detail}")]
    ProblemData { field: String, detail: String },

    /// Configuration file error.
    #[error("config error at line {line}: {detail}")]
    Config { line: usize, detail: String },

    /// Malformed mesh or data file.
    #[error("parse error in {path} at line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
