use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures split by whose fault they are, which fixes the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, paths, configuration or files: exit code 1.
    #[error("{0}")]
    User(String),
    /// A broken invariant inside the program: exit code 2.
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    /// One line, safe to parse: no embedded newlines.
    pub fn line(&self) -> String {
        self.to_string().replace(['\n', '\r'], " ")
    }
}

impl From<hnwave_core::Error> for CliError {
    fn from(e: hnwave_core::Error) -> Self {
        match e {
            hnwave_core::Error::Internal(m) => CliError::Internal(m),
            hnwave_core::Error::BackwardTwice => CliError::Internal(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}

/// Attach the path to an I/O failure.
pub fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::user(format!("{}: {e}", path.display()))
}
