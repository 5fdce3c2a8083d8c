use std::fmt;
use std::path::PathBuf;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 4).
    Usage(String),
    /// A file could not be read or written (exit 2).
    Io { path: PathBuf, source: std::io::Error },
    /// A library invariant was violated (exit 3).
    Invariant { stage: &'static str, source: iris3d::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Invariant { .. } => 3,
            CliError::Usage(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Invariant { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Attaches a stage name to library errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for iris3d::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Invariant { stage, source })
    }
}
