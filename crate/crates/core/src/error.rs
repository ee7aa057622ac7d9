use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("cannot parse ensemble spec {text:?}: {reason}")]
    ParseSpec { text: String, reason: String },

    #[error("layer chain mismatch at layer {layer}: {reason}")]
    Chain { layer: usize, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite value at epoch {epoch}, batch {batch}, layer {layer}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        layer: usize,
    },

    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
