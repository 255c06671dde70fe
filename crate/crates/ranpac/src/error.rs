use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::store::StoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(ranpac_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => exit::CONFIG,
            AppError::Data(_) | AppError::Io { .. } => exit::DATA,
            AppError::Numerical(_) => exit::NUMERICAL,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }
}

impl From<ranpac_core::Error> for AppError {
    fn from(e: ranpac_core::Error) -> Self {
        use ranpac_core::Error as E;
        if e.is_numerical() {
            return AppError::Numerical(e);
        }
        match e.root() {
            E::InvalidParameter(_) | E::InfeasibleSplit { .. } => AppError::Config(e.to_string()),
            E::UndefinedSimilarity => AppError::Numerical(e),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        AppError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
