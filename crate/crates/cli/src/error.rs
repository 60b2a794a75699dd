//! Exit-code contract: 0 success, 1 validation error, 2 runtime error.

use streamspeech_datagen::DatagenError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments, inputs or missing prerequisites.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl From<streamspeech_core::Error> for CliError {
    fn from(e: streamspeech_core::Error) -> Self {
        use streamspeech_core::Error as E;
        match e {
            E::Config(_) | E::Wav(_) | E::SampleRate { .. } | E::UnknownToken(_) => Self::Validation(e.to_string()),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Config(_) | DatagenError::EmptyManifest | DatagenError::Manifest { .. } => {
                Self::Validation(e.to_string())
            }
            DatagenError::Core(core) => core.into(),
            other => {
                let context = match other.location() {
                    Some((stage, record)) => format!("datagen failed at stage `{stage}` on record `{record}`"),
                    None => "datagen failed".to_string(),
                };
                Self::Runtime(anyhow::Error::new(other).context(context))
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}
