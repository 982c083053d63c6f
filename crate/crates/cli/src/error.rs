use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for everything that fails later.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<precis_core::Error> for CliError {
    fn from(e: precis_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<precis_ipp::IppError> for CliError {
    fn from(e: precis_ipp::IppError) -> Self {
        CliError::Run(e.to_string())
    }
}
