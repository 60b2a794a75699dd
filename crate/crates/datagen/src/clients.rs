//! Request/response interfaces of the five generation backends. Messages are
//! plain serde structs so a remote backend can exchange them as JSON.

use serde::{Deserialize, Serialize};

use crate::types::{Language, SpeakerTags};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientError(pub String);

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ClientResult<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionRequest {
    pub record_id: String,
    pub language: Language,
    pub prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionReply {
    pub text: String,
    /// Sensitivity label, e.g. `"age"` or `"none"`.
    pub sensitivity: String,
    pub required_value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRequest {
    pub record_id: String,
    pub language: Language,
    pub prompt: String,
    pub instruction: String,
    /// Transcript of the seed utterance the query is spoken in.
    pub transcript: String,
    pub tags: SpeakerTags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseReply {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionRequest {
    pub record_id: String,
    pub prompt: String,
    pub instruction: String,
    pub response: String,
    pub tags: SpeakerTags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionReply {
    pub emotion: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiceCloneRequest {
    pub record_id: String,
    pub language: Language,
    pub text: String,
    pub reference_id: String,
    pub reference_audio: String,
    pub reference_tags: SpeakerTags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructedSynthesisRequest {
    pub record_id: String,
    pub language: Language,
    pub text: String,
    pub voice_id: String,
    /// Speaking-style instruction such as an emotion or tone label.
    pub style: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioReply {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

pub trait InstructionClient: Send + Sync {
    fn generate(&self, req: &InstructionRequest) -> ClientResult<InstructionReply>;
}

pub trait ResponseClient: Send + Sync {
    fn respond(&self, req: &ResponseRequest) -> ClientResult<ResponseReply>;
}

pub trait EmotionClient: Send + Sync {
    fn infer(&self, req: &EmotionRequest) -> ClientResult<EmotionReply>;
}

pub trait VoiceCloneClient: Send + Sync {
    fn clone_voice(&self, req: &VoiceCloneRequest) -> ClientResult<AudioReply>;
}

pub trait InstructedSynthesisClient: Send + Sync {
    fn synthesize(&self, req: &InstructedSynthesisRequest) -> ClientResult<AudioReply>;
}

/// Prompt templates; `{language}` is substituted before sending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prompts {
    pub instruction: String,
    pub response: String,
    pub emotion: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            instruction: "Write one spoken request in {language} whose best answer depends on the speaker's emotion, \
                          age or gender, or on none of them. Report which cue it depends on and the cue value."
                .into(),
            response: "Reply in {language} with a concise, empathetic answer suited to the speaker's tags.".into(),
            emotion: "Name the emotional tone the reply should be spoken in.".into(),
        }
    }
}

impl Prompts {
    pub fn render(template: &str, language: Language) -> String {
        template.replace("{language}", language.label())
    }
}

pub struct ClientSuite {
    pub instruction: Box<dyn InstructionClient>,
    pub response: Box<dyn ResponseClient>,
    pub emotion: Box<dyn EmotionClient>,
    pub voice_clone: Box<dyn VoiceCloneClient>,
    pub synthesis: Box<dyn InstructedSynthesisClient>,
    pub prompts: Prompts,
}
