use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported polynomial degree {degree} (maximum is {max})")]
    UnsupportedDegree { degree: usize, max: usize },

    #[error("gap function is not finite at ({x}, {y})")]
    InvalidGap { x: f64, y: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh audit failed: {0}")]
    Audit(String),

    #[error("assembly corruption: quadratic form {value:e} is negative")]
    AssemblyCorruption { value: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("active-set iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("active-set iteration is cycling (period {period} at iteration {iteration})")]
    Cycling { iteration: usize, period: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("all error indicators vanish, nothing to mark")]
    NothingToMark,

    #[error("reference problem with {dofs} unknowns exceeds the cap of {cap}")]
    ReferenceTooLarge { dofs: usize, cap: usize },

    #[error("solve failed at level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
