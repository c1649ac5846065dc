use thiserror::Error;

/// Errors produced by the tracking pipeline, its kernels and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not fit the operation.
    #[error("shape error: {0}")]
    Shape(String),
    /// A numeric parameter is outside its domain (window size, threshold, ...).
    #[error("invalid parameter: {0}")]
    Param(String),
    /// Caller-supplied data is unusable (degenerate box, empty frame, ...).
    #[error("invalid input: {0}")]
    Input(String),
    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A value became non-finite.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A file did not follow the expected layout.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
