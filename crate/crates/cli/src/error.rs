use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing upstream artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] probefuse::Error),
}

impl CliError {
    /// 2 input validation, 3 missing dependency artifact, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(probefuse::Error::ZeroWeights) => 4,
            CliError::Validation(_) | CliError::Core(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}
