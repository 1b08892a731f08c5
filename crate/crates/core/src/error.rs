use std::path::PathBuf;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid neuron address: {0}")]
    Addressing(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format error in `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("truncated payload at layer {layer}")]
    TruncatedPayload { layer: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("no vulnerability range for layer {layer} neuron {neuron}")]
    MissingRange { layer: usize, neuron: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
