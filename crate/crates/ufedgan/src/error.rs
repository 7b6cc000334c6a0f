use std::path::{Path, PathBuf};

use ufedgan_core::ErrorKind;

/// Errors surfaced by the runner and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ufedgan_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: parse error at byte {offset}: {reason}")]
    Parse { path: PathBuf, offset: usize, reason: String },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, offset: usize, reason: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), offset, reason: reason.into() }
    }

    /// 2 config, 3 data, 4 protocol, 5 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Protocol => 4,
                ErrorKind::Numerical => 5,
            },
        }
    }
}

/// Attaches a path to core errors raised while decoding a file.
pub(crate) fn in_file(path: &Path) -> impl Fn(ufedgan_core::Error) -> CliError + '_ {
    move |e| match e {
        ufedgan_core::Error::Frame { offset, reason } => CliError::parse(path, offset, reason),
        ufedgan_core::Error::Transcript { index, reason } => {
            CliError::parse(path, 0, format!("frame {index}: {reason}"))
        }
        other => CliError::Core(other),
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
