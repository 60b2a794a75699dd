use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("backward called before forward on {0}")]
    MissingCache(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    LengthOverflow { len: usize, max: usize },
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("gradient check refused: {count} scalar parameters exceeds the limit of {limit}")]
    TooManyParameters { count: usize, limit: usize },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },
    #[error("unsupported wav: {0}")]
    Wav(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("k-means needs at least {needed} feature rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("stream: {0}")]
    Stream(&'static str),
    #[error("emotion alignment requires an emotion tag on pair {0}")]
    MissingTag(usize),
    #[error("joint fine-tuning corpus has no {0} samples")]
    EmptyModality(&'static str),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for Error {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Wav(other.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_mismatch(context: &str, expected: &[usize], actual: &[usize]) -> Error {
    Error::ShapeMismatch {
        context: context.to_string(),
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}
