use std::path::{Path, PathBuf};

/// Errors surfaced by the pipeline and the command line.
#[derive(Debug, thiserror::Error)]
pub enum BtmError {
    #[error(transparent)]
    Core(#[from] btm_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<BtmError>,
    },
}

pub type Result<T> = std::result::Result<T, BtmError>;

impl BtmError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            BtmError::MissingInput(path.to_path_buf())
        } else {
            BtmError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        BtmError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        BtmError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for usage, configuration and missing-input errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BtmError::Config(_) | BtmError::MissingInput(_) => 2,
            BtmError::Context { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
