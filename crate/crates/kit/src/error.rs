// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

/// Exit code when every suite passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code for I/O and other runtime failures outside the suites.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit code when any suite fails or is flagged.
pub const EXIT_FAIL: i32 = 2;
/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum KitError {
    #[error("config error at {key}: {message}")]
    Config { key: String, message: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Numeric(#[from] chernoff_core::Error),
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl KitError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        KitError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KitError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            KitError::Config { .. } | KitError::Parse(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

pub type KitResult<T> = Result<T, KitError>;
