//! Error type shared by all modules.

/// Failures surfaced by the simulator and solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A link has zero capacity, so any transfer over it would never finish.
    #[error("zero link rate on {0} link")]
    ZeroRate(&'static str),
    /// Two parameter vectors or a model and a dataset disagree in shape.
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// Training produced a non-finite gradient.
    #[error("non-finite gradient at step {step} (loss {loss})")]
    NonFinite { step: u32, loss: f64 },
    /// A solver instance has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A configuration value breaks an invariant.
    #[error("invalid config at {path}: {msg}")]
    Config { path: String, msg: String },
    /// Reading or writing a file failed.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Result alias using [`Error`].
pub type Result<T> = std::result::Result<T, Error>;
