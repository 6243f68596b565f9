use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated input at byte offset {offset}: needed {needed} bytes, found {found}")]
    Truncated { offset: u64, needed: usize, found: usize },

    #[error("invalid stream header: {0}")]
    InvalidHeader(String),

    #[error("tags not sorted by (timestamp, channel): first violation at index {index}")]
    Unsorted { index: usize },

    #[error("tag {index} uses channel {channel}, outside the declared {channel_count} channels")]
    UnknownChannel { index: usize, channel: u16, channel_count: u16 },

    #[error("record count mismatch: header declares {declared}, stream holds {actual}")]
    RecordCount { declared: u64, actual: u64 },

    #[error("wavelength {wavelength_nm} nm outside the Sellmeier validity range {min_nm}..{max_nm} nm")]
    SellmeierRange { wavelength_nm: f64, min_nm: f64, max_nm: f64 },

    #[error("linearized phase-matching model selected but no coefficients were given")]
    MissingLinearizedCoefficients,

    #[error("amplitude is zero everywhere")]
    ZeroAmplitude,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("histogram shape or bin edges differ: {0}")]
    ShapeMismatch(String),

    #[error("{what} = {value} is outside its domain {domain}")]
    OutOfDomain { what: &'static str, value: f64, domain: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
