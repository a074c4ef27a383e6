use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MendError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt data at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("fracture error: {0}")]
    Fracture(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Geometry(#[from] mendkit_geometry::GeometryError),
    #[error(transparent)]
    Autodiff(#[from] mendkit_autodiff::AutodiffError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, MendError>;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

impl MendError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MendError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        MendError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn exit_class(&self) -> ExitClass {
        use mendkit_autodiff::AutodiffError as A;
        match self {
            MendError::Config(_) | MendError::Parameter(_) => ExitClass::Usage,
            MendError::Numeric(_) => ExitClass::Numeric,
            MendError::Autodiff(A::NonFinite { .. } | A::NonFiniteGradient { .. }) => ExitClass::Numeric,
            MendError::Autodiff(_) => ExitClass::Numeric,
            _ => ExitClass::Data,
        }
    }

    /// Wraps autodiff failures with the training or inference context.
    pub fn numeric_context(self, context: impl std::fmt::Display) -> Self {
        match self {
            MendError::Autodiff(e) => MendError::Numeric(format!("{}: {}", context, e)),
            MendError::Numeric(m) => MendError::Numeric(format!("{}: {}", context, m)),
            other => other,
        }
    }
}
