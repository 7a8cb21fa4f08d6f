use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("batch too small for training-mode batch norm: {size} row(s), need at least 2")]
    BatchTooSmall { size: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("encoding error in column `{column}`: {detail}")]
    Encoding { column: String, detail: String },

    #[error("ingestion error{}: {detail}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingestion { row: Option<u64>, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("degenerate class {class}: count must be positive")]
    DegenerateClass { class: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("malformed file: {0}")]
    Format(String),

    /// A non-finite intermediate value outside any training epoch.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("numeric failure at epoch {epoch}: {detail}")]
    Numeric { epoch: usize, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 3 for numeric
    /// failures during training, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } | Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}
