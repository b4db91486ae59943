use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// The variants map onto process exit codes through [`Error::exit_code`]:
/// validation problems exit with 2, missing inputs with 3 and malformed data
/// with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration; `field` is a dotted path such as `world.sizes.n`.
    #[error("{field}: {message}")]
    Config { field: String, message: String },

    /// Malformed or inconsistent data (non-finite scores, misaligned logs, ...).
    #[error("{0}")]
    Data(String),

    /// An input produced by an earlier command is absent.
    #[error("missing prerequisite {}: {hint}", path.display())]
    MissingPrerequisite { path: PathBuf, hint: String },

    /// Training diverged.
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used on stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "validation",
            Error::Data(_) | Error::Diverged { .. } => "data",
            Error::MissingPrerequisite { .. } => "missing-prerequisite",
            Error::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::MissingPrerequisite { .. } => 3,
            Error::Data(_) | Error::Diverged { .. } | Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
