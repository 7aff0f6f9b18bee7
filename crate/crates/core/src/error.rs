use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A parse failure at a specific line of an input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A non-finite value or failed factorization inside a named parameter block.
    #[error("numeric error in {block}: {detail}")]
    Numeric { block: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(block: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            block: block.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message of numeric and input errors with extra context.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Numeric { block, detail } => Error::Numeric {
                block: format!("{ctx}: {block}"),
                detail,
            },
            Error::Input(msg) => Error::Input(format!("{ctx}: {msg}")),
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }
}
