use thiserror::Error;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

impl AutodiffError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        AutodiffError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
