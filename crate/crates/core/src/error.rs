use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file content, with location context where known.
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: u64, msg: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Schema violations, one entry per offending path.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (missing files, malformed
    /// data, schema violations) as opposed to runtime failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Input(_)
                | Error::Config(_)
                | Error::Validation(_)
                | Error::Json(_)
                | Error::Checkpoint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
