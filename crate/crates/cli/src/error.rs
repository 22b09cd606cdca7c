use dressed_gate::GateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: GateError,
    },

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Exit status: 2 for configuration (and output location) problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

/// Attaches context to core errors. Invalid-input errors from the core count as
/// configuration errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, GateError> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| {
            if e.is_numerical() {
                CliError::Numerical {
                    context: what(),
                    source: e,
                }
            } else {
                CliError::config(what(), e.to_string())
            }
        })
    }
}
