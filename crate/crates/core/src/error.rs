use thiserror::Error;

/// Errors raised by the learners and the measure substrate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    /// A value failed domain validation (not a probability vector, NaN coordinate, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// An iterative or LP solver failed to produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A reconstruction LP stayed infeasible after all slack relaxations.
    #[error("reconstruction failed: {message} (best residual {residual:.3e})")]
    Reconstruction { message: String, residual: f64 },

    /// The input carries no usable signal (rank zero, every eigenvalue below threshold).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A sampled witness broke one of the basis inequalities.
    #[error("property `{property}` violated: value {value:.6e} exceeds bound {bound:.6e}")]
    PropertyViolation {
        property: String,
        value: f64,
        bound: f64,
        witness: Vec<f64>,
    },

    /// A configured size cap was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// An error raised inside a named pipeline stage.
    #[error("stage `{stage}`: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

/// Attach a pipeline stage name to an error.
pub trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage: name.to_string(), source: Box::new(e) })
    }
}
