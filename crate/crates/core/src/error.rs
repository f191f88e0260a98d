use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("unsupported format: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error in sample `{sample_id}`: {message}")]
    Dataset { sample_id: String, message: String },
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Bounds(_) => "bounds",
            Error::Argument(_) => "argument",
            Error::Degenerate(_) => "degenerate",
            Error::Decode(_) => "decode",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Dataset { .. } => "dataset",
            Error::Ingest(_) => "ingest",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
