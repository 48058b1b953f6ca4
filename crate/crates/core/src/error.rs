use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("field `{field}` at byte {offset}: {detail}")]
    Parse { field: String, offset: u64, detail: String },

    #[error("{0}")]
    UndefinedCorrelation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Image(String),
}

impl Error {
    pub fn invalid(msg: impl fmt::Display) -> Self {
        Error::InvalidInput(msg.to_string())
    }

    pub fn parse(field: impl Into<String>, offset: u64, detail: impl fmt::Display) -> Self {
        Error::Parse {
            field: field.into(),
            offset,
            detail: detail.to_string(),
        }
    }

    /// Stable, machine-parsable error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Parse { .. } => "parse-error",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::Io(_) => "io-error",
            Error::Json(_) => "parse-error",
            Error::Image(_) => "image-error",
        }
    }
}
