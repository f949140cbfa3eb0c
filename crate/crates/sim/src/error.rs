use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: scrible_core::Error,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
}

impl SimError {
    /// Invalid input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        match self {
            SimError::Config(_) => true,
            SimError::Core { source, .. } => matches!(source, scrible_core::Error::Config(_)),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) trait CoreContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> CoreContext<T> for scrible_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| SimError::Core {
            context: what(),
            source,
        })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SimError {
    let path = path.into();
    move |source| SimError::Io { path, source }
}
