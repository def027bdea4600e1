use thiserror::Error;

/// Errors surfaced by the pipeline, grouped by who has to fix them.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or option is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A cell in the input table could not be used as a feature value.
    #[error("row {row}, column {column:?}: {reason}")]
    Cell {
        row: usize,
        column: String,
        reason: String,
    },

    /// The input data cannot support the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// An internal contract was broken (for example a coordinate escaped the unit cube).
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// Process exit status for this error: 1 usage, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Cell { .. } | Error::Data(_) | Error::Csv(_) | Error::Io(_) | Error::Json(_) => {
                2
            }
            Error::Invariant(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
