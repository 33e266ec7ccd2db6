use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {field} ({value}) at neuron {index}")]
    NonFinite {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no labeled responses for classes {0:?}")]
    MissingClasses(Vec<u8>),

    #[error("image {index}: {reason}")]
    Image { index: usize, reason: String },

    #[error("IDX parse error at byte {offset}: {msg}")]
    Idx { offset: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
