use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("field evaluation failed at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },

    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    #[error("node {index} is {class}, expected an interior node")]
    Classification { index: usize, class: &'static str },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("mismatched grids: {0}")]
    GridMismatch(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
