use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("wire format: {0}")]
    Wire(String),

    #[error(transparent)]
    Core(#[from] inpaint_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StreamError> = std::result::Result<T, E>;
