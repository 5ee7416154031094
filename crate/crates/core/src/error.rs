use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value {value} does not fit in {bits}-bit two's complement")]
    Precision { value: i64, bits: u8 },

    #[error("weight {0} is not a member of the codebook")]
    NotInCodebook(i64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed indirection table: {0}")]
    Malformed(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
