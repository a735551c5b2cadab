use thiserror::Error;

pub type Result<T> = std::result::Result<T, MlError>;

#[derive(Debug, Error)]
pub enum MlError {
    /// Invalid hyperparameters or model-selection settings.
    #[error("config error: {0}")]
    Config(String),

    /// Empty, ragged or non-finite training data.
    #[error("data error: {0}")]
    Data(String),

    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Optimisation diverged or a linear solve failed.
    #[error("training error: {0}")]
    Training(String),

    /// Operation needs a different model kind.
    #[error("unsupported for this model: {0}")]
    Unsupported(String),

    #[error("model file error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
