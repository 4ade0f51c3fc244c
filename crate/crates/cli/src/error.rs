use std::fmt;

/// An operational failure tagged with the stage that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn new(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage name to any displayable error.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T, E: fmt::Display> Stage<T> for Result<T, E> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::new(stage, e.to_string()))
    }
}
