use thiserror::Error;

#[derive(Debug, Error)]
pub enum WlraError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("could not generate a generic instance after {attempts} attempts")]
    GenerationFailure { attempts: usize },
}

pub type Result<T> = std::result::Result<T, WlraError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(WlraError::InvalidInput(msg.into()))
}
