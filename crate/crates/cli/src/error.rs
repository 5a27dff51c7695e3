use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },

    /// A semantically invalid value, named by its `section.key` path.
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },

    #[error(transparent)]
    Core(#[from] varipro::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(path: &Path, msg: impl Into<String>) -> Self {
        Self::Config {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }

    pub fn field(field: &str, msg: impl Into<String>) -> Self {
        Self::Field {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
