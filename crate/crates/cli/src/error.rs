use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {}; run `rcvae {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] rcvae_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

/// 2 config or data, 3 missing artifact, 4 numeric failure.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingArtifact { .. } => EXIT_MISSING,
            CliError::Core(e) if e.is_numeric() || matches!(e, rcvae_core::Error::Hpo(_)) => EXIT_NUMERIC,
            CliError::Config(_) | CliError::Output { .. } | CliError::Core(_) => EXIT_CONFIG,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let missing = CliError::MissingArtifact {
            path: "a".into(),
            producer: "train",
        };
        assert_eq!(missing.exit_code(), 3);
        let diverged = CliError::Core(rcvae_core::Error::Diverged {
            epoch: 3,
            detail: "nan".into(),
        });
        assert_eq!(diverged.exit_code(), 4);
        assert_eq!(CliError::Core(rcvae_core::Error::Parse("row 3".into())).exit_code(), 2);
    }
}
