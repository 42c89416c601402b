use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrawError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bayer pattern mismatch: file declares {found}, expected {expected}")]
    PatternMismatch { expected: String, found: String },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: String, reason: String },

    #[error("color matrix is singular and cannot be inverted")]
    SingularMatrix,

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, DrawError>;

impl From<image::ImageError> for DrawError {
    fn from(e: image::ImageError) -> Self {
        DrawError::Codec(e.to_string())
    }
}
