use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("{stage} client failed on record {record}: {message}")]
    Client {
        stage: &'static str,
        record: String,
        message: String,
    },
    #[error("no seed for record {record}: language {language}, {constraint}")]
    NoMatchingSeed {
        record: String,
        language: String,
        constraint: String,
    },
    #[error("record {record}: emotion client returned unknown label `{label}`")]
    InvalidEmotion { record: String, label: String },
    #[error("{stage} precondition failed on record {record}: {message}")]
    Precondition {
        stage: &'static str,
        record: String,
        message: String,
    },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] streamspeech_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatagenError {
    /// Pipeline stage and record id, when the failure belongs to one record.
    pub fn location(&self) -> Option<(&'static str, &str)> {
        match self {
            Self::Client { stage, record, .. } | Self::Precondition { stage, record, .. } => Some((stage, record)),
            Self::NoMatchingSeed { record, .. } => Some(("select_seed", record)),
            Self::InvalidEmotion { record, .. } => Some(("emotion", record)),
            _ => None,
        }
    }
}

pub type Result<T, E = DatagenError> = std::result::Result<T, E>;
