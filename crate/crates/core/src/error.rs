use thiserror::Error;

/// Errors raised by the pushframe pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("rate error: {0}")]
    Rate(String),
    #[error("row set is not closed under conjugate pairing: {0}")]
    Constraint(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("scan incomplete: {0}")]
    ScanIncomplete(String),
    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),
    #[error("conversion error: {0}")]
    Conversion(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("noiselet convention mismatch: {0}")]
    Convention(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// True for errors caused by bad user input rather than I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
