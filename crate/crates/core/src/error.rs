use std::path::PathBuf;

use crate::types::PanopticLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: not a readable PNG: {source}")]
    PngDecode {
        path: PathBuf,
        #[source]
        source: png::DecodingError,
    },

    #[error("{path}: PNG encoding failed: {source}")]
    PngEncode {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },

    #[error("{path}: expected 16-bit samples, found {found} bits")]
    WrongBitDepth { path: PathBuf, found: u8 },

    #[error("{path}: expected a single grayscale channel, found {found}")]
    WrongChannelCount { path: PathBuf, found: String },

    #[error("label {label} at ({x}, {y}) cannot be encoded as class*1000+instance below 65535")]
    Unencodable { x: usize, y: usize, label: PanopticLabel },

    #[error("depth {value} m at ({x}, {y}) is outside the encodable range [0, 65535/256)")]
    DepthOutOfRange { x: usize, y: usize, value: f64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("inputs were built against different class tables")]
    ClassTableMismatch,

    #[error("depth threshold must be positive, got {0}")]
    InvalidLambda(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid class table: {0}")]
    InvalidClassTable(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("accumulator holds no frames")]
    EmptyAccumulator,

    #[error("map of {width}x{height} exceeds the oracle limit of {max}x{max}")]
    MapTooLarge { width: usize, height: usize, max: usize },

    #[error("observed window needs at least {needed} frame(s), got {found}")]
    WindowTooShort { needed: usize, found: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
