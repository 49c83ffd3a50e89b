use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A gradient or loss went non-finite; `param` names the offending tensor.
    #[error("training diverged: non-finite value in `{param}`")]
    Divergence { param: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid world spec: {0}")]
    Spec(String),

    #[error("not enough data: have {have}, need {need}")]
    NotEnoughData { have: usize, need: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        Error::Dimension {
            op,
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }
}
