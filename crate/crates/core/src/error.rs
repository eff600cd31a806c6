use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants split into two families: input/validation problems (bad data,
/// bad parameters, malformed files) and runtime failures (numerical
/// breakdown, I/O). [`Error::is_validation`] tells them apart so the CLI can
/// map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("item `{id}`: {reason}")]
    InvalidItem { id: String, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gradient check failed: tensor `{tensor}`[{index}] relative error {rel_err:.3e} exceeds {tol:.1e}")]
    GradientCheck {
        tensor: String,
        index: usize,
        rel_err: f64,
        tol: f64,
    },

    #[error("all {0} grid cells failed")]
    AllCellsFailed(usize),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_)
                | Error::GradientCheck { .. }
                | Error::AllCellsFailed(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
