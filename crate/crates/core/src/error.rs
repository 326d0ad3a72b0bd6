use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no stock satisfies the presence threshold")]
    EmptyUniverse,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid regression window: {0}")]
    InvalidWindow(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Format(_)
            | Error::EmptyUniverse
            | Error::Dimension(_)
            | Error::InvalidWindow(_)
            | Error::EmptySplit(_)
            | Error::Csv(_) => 2,
            Error::Undefined(_) | Error::Io(_) | Error::Json(_) => 3,
        }
    }
}
