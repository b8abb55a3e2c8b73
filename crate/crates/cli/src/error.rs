use std::path::{Path, PathBuf};

use latent_bo_core::ConfigError;

/// Failures of the runner. Configuration problems exit with status 2,
/// everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    /// A core module failed; `stage` names the pipeline step and seed.
    #[error("{module} failed during {stage}: {source}")]
    Run { module: &'static str, stage: String, source: latent_bo_core::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_owned(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_owned(), message: message.into() }
    }

    pub fn run(stage: impl Into<String>, source: impl Into<latent_bo_core::Error>) -> Self {
        let source = source.into();
        let module = match &source {
            latent_bo_core::Error::Config(_) => "config",
            latent_bo_core::Error::Diff(_) => "diffcore",
            latent_bo_core::Error::Metric(_) => "metric",
            latent_bo_core::Error::Vae(_) => "vae",
            latent_bo_core::Error::Gp(_) => "gp",
            latent_bo_core::Error::Bo(_) => "boloop",
            latent_bo_core::Error::Analysis(_) => "analysis",
        };
        CliError::Run { module, stage: stage.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
