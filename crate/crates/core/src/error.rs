use thiserror::Error;

/// Errors produced by the simulation and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed-form expression hit an exact singularity.
    #[error("singular expression: {0}")]
    Singular(String),

    /// Two wavelengths coincide, so the beat period diverges.
    #[error("beat period diverges: {0}")]
    Divergence(String),

    /// The requested problem exceeds a configured size limit.
    #[error("resource limit exceeded: {what} = {requested} (cap {cap})")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    /// The steady state is not unique.
    #[error("steady state is not unique: {0}")]
    Ambiguous(String),

    /// An iterative procedure did not converge.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// The normal equations of a least-squares fit are singular.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Malformed input data.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
