use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inertia matrix is not invertible")]
    SingularInertia,

    #[error("numerical blow-up at t = {t:.6} s: {what}")]
    NumericalBlowup { t: f64, what: String },

    #[error("integration step {0} s outside (0, 0.01]")]
    InvalidStep(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("`{key}` out of range: {reason}")]
    Range { key: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
