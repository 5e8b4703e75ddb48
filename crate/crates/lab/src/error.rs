use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("incomplete run directory {dir}: {reason}")]
    IncompleteRun { dir: PathBuf, reason: String },
}

impl LabError {
    pub fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation { .. } => 1,
            LabError::Numerical(_) => 2,
            LabError::Io { .. } | LabError::IncompleteRun { .. } => 3,
        }
    }

    /// Wraps a library error raised while handling config key `key`.
    pub fn at(key: &str, e: magdirac::Error) -> Self {
        match classify(&e) {
            Class::Validation => match e {
                magdirac::Error::Config { key, reason } => LabError::Validation { key, reason },
                other => LabError::validation(key, other.to_string()),
            },
            Class::Numerical => LabError::Numerical(e.to_string()),
        }
    }
}

enum Class {
    Validation,
    Numerical,
}

fn classify(e: &magdirac::Error) -> Class {
    use magdirac::Error::*;
    match e {
        KrylovNonConvergence { .. } | DenseAssembly { .. } | Eigen(_) | NonUniformSteps(_) | ShortTrajectory { .. } => {
            Class::Numerical
        }
        _ => Class::Validation,
    }
}

impl From<magdirac::Error> for LabError {
    fn from(e: magdirac::Error) -> Self {
        match classify(&e) {
            Class::Validation => LabError::validation("input", e.to_string()),
            Class::Numerical => LabError::Numerical(e.to_string()),
        }
    }
}
