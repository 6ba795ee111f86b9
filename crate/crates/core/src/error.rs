use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subject {id}: {reason}")]
    InvalidSubject { id: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("collinear design: {}", columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("no events in the data")]
    NoEvents,

    #[error(
        "calibration model is inconsistent with subject {subject}: observed non-exposure at {time} has probability zero"
    )]
    InconsistentModel { subject: String, time: f64 },

    #[error("{what} is singular (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_subject(id: &str, reason: impl Into<String>) -> Self {
        Error::InvalidSubject {
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}
