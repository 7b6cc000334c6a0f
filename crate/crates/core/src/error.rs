use alloc::string::String;

/// Errors raised anywhere in the core crate.
///
/// Variants are grouped by [`ErrorKind`], which the CLI maps onto exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("link error: {0}")]
    Link(String),
    #[error("frame error at byte {offset}: {reason}")]
    Frame { offset: usize, reason: String },
    #[error("transcript error at frame {index}: {reason}")]
    Transcript { index: usize, reason: String },
    #[error("replay error: {0}")]
    Replay(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training error: {0}")]
    Training(String),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Protocol,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Data(_) | Error::Frame { .. } | Error::Transcript { .. } => ErrorKind::Data,
            Error::Protocol(_)
            | Error::Link(_)
            | Error::Replay(_)
            | Error::Structural(_)
            | Error::State(_) => ErrorKind::Protocol,
            Error::Dimension(_)
            | Error::Domain(_)
            | Error::NonFinite(_)
            | Error::Contract(_)
            | Error::Numerical(_)
            | Error::Training(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Builds a [`Error::Dimension`] naming both offending shapes.
pub(crate) fn shape_mismatch(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(alloc::format!("{op}: shapes {a:?} and {b:?} are incompatible"))
}
