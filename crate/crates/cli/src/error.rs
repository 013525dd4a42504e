use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] freecap_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl CliError {
    /// 2 for anything the caller can fix by changing the invocation, 3 for
    /// numerical failures inside the library.
    pub fn exit_code(&self) -> i32 {
        use freecap_core::Error as E;
        match self {
            Self::Usage(_) | Self::Io { .. } | Self::Parse { .. } => 2,
            Self::Core(E::Domain(_) | E::Shape { .. }) => 2,
            Self::Core(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
