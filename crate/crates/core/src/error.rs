use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid basis: {0}")]
    Basis(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}: {msg}")]
    DataRow { row: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Basis(_) => 2,
            Error::Data(_) | Error::DataRow { .. } | Error::Csv(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) | Error::Json(_) => 3,
        }
    }
}
