use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("query {query_id}: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 for usage/config problems, 3 for I/O and bad data, 4 for broken
    /// internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::InvalidInput(_)
            | Error::DataIntegrity(_)
            | Error::Format(_)
            | Error::Io { .. } => 3,
            Error::Query { source, .. } => source.exit_code(),
            Error::Invariant(_) => 4,
        }
    }
}
