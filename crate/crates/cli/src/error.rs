use infobound_core::BoundError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("cannot serialize output: {0}")]
    Serialize(String),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Bound(e) if e.is_numeric() => 3,
            CliError::Write { .. } | CliError::Serialize(_) => 3,
            _ => 2,
        }
    }
}
