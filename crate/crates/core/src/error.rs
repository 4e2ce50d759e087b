use std::io;

/// Errors produced anywhere in the crate.
///
/// [`Error::category`] gives a short stable tag that the command line uses for
/// machine-parsable failure lines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite values produced at stage `{0}`")]
    NonFinite(String),

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{0}")]
    Config(String),

    #[error("{0} already exists (pass --force to overwrite)")]
    AlreadyExists(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite(_) => "non-finite",
            Error::MissingGradient(_) => "missing-gradient",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::AlreadyExists(_) => "exists",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
