use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: prestrain_core::Error,
    },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Output(_) => EXIT_CONFIG,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }
}

/// Attach a context string to a library error, classifying bad input as a
/// config error.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T, E: Into<prestrain_core::Error>> Context<T> for Result<T, E> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| {
            let source = e.into();
            if source.is_input_error() {
                CliError::Config {
                    path: what.into(),
                    message: source.to_string(),
                }
            } else {
                CliError::Numerical {
                    context: what.into(),
                    source,
                }
            }
        })
    }
}
