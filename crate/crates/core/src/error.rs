use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },

    #[error("missing target: {0}")]
    MissingTarget(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("undefined AUROC: {0}")]
    UndefinedAuroc(&'static str),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape { op, detail: detail.into() })
}
