use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("time step {dt:e} violates the stability guard; use dt <= {required:e}")]
    StepSize { dt: f64, required: f64 },

    #[error("feature not found: {0}")]
    FeatureNotFound(String),

    #[error("parse error in {path} at {location}: {reason}")]
    Parse {
        path: PathBuf,
        location: String,
        reason: String,
    },

    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

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

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::Validation(_)
            | Error::Config { .. }
            | Error::Parse { .. }
            | Error::StepSize { .. } => 2,
            Error::Resource(_) => 3,
            Error::FeatureNotFound(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
