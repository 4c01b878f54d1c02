use alloc::string::String;

/// Errors raised by the core transforms and the network.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("capacity exceeded: {what} needs {required} but only {available} available")]
    Capacity {
        what: String,
        required: usize,
        available: usize,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("corrupt plan: {0}")]
    CorruptPlan(String),
    #[error("character {ch:?} at index {index} is outside the supported character set")]
    Encoding { index: usize, ch: char },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("model integrity: {0}")]
    ModelIntegrity(String),
    #[error("loss became non-finite at step {0}")]
    Diverged(u64),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
