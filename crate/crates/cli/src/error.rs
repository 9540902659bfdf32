use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Offending field as a JSON pointer, e.g. `/kernel/hold`.
    #[error("CONFIG_INVALID at {pointer}: {message}")]
    ConfigInvalid { pointer: String, message: String },

    #[error("MISSING_INPUT: {0}")]
    MissingInput(String),

    #[error("{}: {0}", .0.code())]
    Core(#[from] walklab_core::Error),

    #[error("IO: {0}")]
    Io(String),

    #[error("INTERNAL: {0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid { .. } => "CONFIG_INVALID",
            CliError::MissingInput(_) => "MISSING_INPUT",
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "IO",
            CliError::Internal(_) => "INTERNAL",
        }
    }

    pub fn invalid(pointer: &str, message: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
