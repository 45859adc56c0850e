use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("replicate {replicate}, {method}: {source}")]
    Solver {
        replicate: usize,
        method: String,
        #[source]
        source: sipsolve_core::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: sipsolve_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl AppError {
    /// Process exit status: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn core(
        context: impl Into<String>,
    ) -> impl FnOnce(sipsolve_core::Error) -> AppError {
        let context = context.into();
        move |source| AppError::Core { context, source }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(io::Error) -> AppError + '_ {
        move |source| AppError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
