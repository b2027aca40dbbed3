use std::path::PathBuf;

/// Errors of the IO and orchestration layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] contextbias_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

impl Error {
    /// Short machine-readable category for one-line CLI errors.
    pub fn kind(&self) -> &'static str {
        use contextbias_core::Error as C;
        match self {
            Error::Core(C::Shape { .. }) => "shape",
            Error::Core(C::Config(_)) | Error::Config(_) => "config",
            Error::Core(C::Diverged { .. }) => "diverged",
            Error::Core(C::Params(_)) => "checkpoint",
            Error::Core(C::Tokenize { .. }) | Error::Core(C::OutOfVocab { .. }) => "tokenize",
            Error::Core(C::Parse { .. }) | Error::Format { .. } | Error::Json(_) => "format",
            Error::Core(_) => "contract",
            Error::Io { .. } => "io",
        }
    }
}
