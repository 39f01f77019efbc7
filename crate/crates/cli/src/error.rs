use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] locsparse_core::Error),
}

impl CliError {
    /// 2 for bad configuration or input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use locsparse_core::Error as E;
        match self {
            CliError::Core(E::Numerical(_) | E::NonFinite(_)) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
