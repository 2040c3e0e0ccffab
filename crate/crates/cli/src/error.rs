use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] capput::Error),
    #[error("config file {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Everything that reaches `main` as an error is a usage or validation
    /// problem; verification failures are reported through a normal exit.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(2)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}
