use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] pkm_stiffness::Error),
}

impl CliError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 1 for configuration and usage problems, 2 for numerical or model failures.
    pub fn exit_code(&self) -> u8 {
        use pkm_stiffness::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Model(E::Input(_)) | CliError::Model(E::Model(_)) => 1,
            CliError::Model(_) => 2,
        }
    }
}
