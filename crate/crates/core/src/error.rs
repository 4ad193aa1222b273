use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("model file error at node `{node}`: {message}")]
    ModelFile { node: String, message: String },

    #[error("enumeration of {requested} sequences exceeds the limit of {limit}")]
    EnumerationLimit { requested: f64, limit: u64 },

    #[error("cutoff excludes every sequence")]
    EmptySupport,

    #[error("remote model protocol error: {0}")]
    Protocol(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
