//! Record types of the dataset and their invariants.

use serde::{Deserialize, Serialize};
use streamspeech_core::closed_enum;
use streamspeech_core::tags::{Age, Emotion, Gender};

use crate::error::{DatagenError, Result};

closed_enum!(Language {
    En => "en",
    Zh => "zh",
});

closed_enum!(
    /// Paralinguistic cue an instruction depends on.
    Sensitivity {
        Emotion => "emotion",
        Age => "age",
        Gender => "gender",
        None => "none",
    }
);

closed_enum!(Kind {
    Empathetic => "EMPATHETIC",
    General => "GENERAL",
    T2s => "T2S",
});

closed_enum!(
    /// Emotional tone of a spoken response.
    ResponseTone {
        Neutral => "neutral",
        Cheerful => "cheerful",
        ComfortingCalm => "comforting-calm",
        CalmSoothing => "calm-soothing",
        Reassuring => "reassuring",
        Patient => "patient",
    }
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeakerTags {
    pub emotion: Emotion,
    pub gender: Gender,
    pub age: Age,
}

/// Typed view of a (sensitivity, required value) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Requirement {
    None,
    Emotion(Emotion),
    Age(Age),
    Gender(Gender),
}

impl Requirement {
    pub fn parse(sensitivity: Sensitivity, value: Option<&str>) -> std::result::Result<Self, String> {
        let bad = |e: streamspeech_core::Error| e.to_string();
        let v = match (sensitivity, value) {
            (Sensitivity::None, None) => return Ok(Self::None),
            (Sensitivity::None, Some(v)) => return Err(format!("sensitivity `none` carries value `{v}`")),
            (_, None) => return Err(format!("sensitivity `{sensitivity}` needs a required value")),
            (_, Some(v)) => v,
        };
        Ok(match sensitivity {
            Sensitivity::Emotion => Self::Emotion(v.parse().map_err(bad)?),
            Sensitivity::Age => Self::Age(v.parse().map_err(bad)?),
            Sensitivity::Gender => Self::Gender(v.parse().map_err(bad)?),
            Sensitivity::None => unreachable!("handled above"),
        })
    }

    pub fn sensitivity(self) -> Sensitivity {
        match self {
            Self::None => Sensitivity::None,
            Self::Emotion(_) => Sensitivity::Emotion,
            Self::Age(_) => Sensitivity::Age,
            Self::Gender(_) => Sensitivity::Gender,
        }
    }

    pub fn value(self) -> Option<&'static str> {
        match self {
            Self::None => None,
            Self::Emotion(e) => Some(e.label()),
            Self::Age(a) => Some(a.label()),
            Self::Gender(g) => Some(g.label()),
        }
    }

    pub fn satisfied_by(self, tags: &SpeakerTags) -> bool {
        match self {
            Self::None => true,
            Self::Emotion(e) => tags.emotion == e,
            Self::Age(a) => tags.age == a,
            Self::Gender(g) => tags.gender == g,
        }
    }
}

impl std::fmt::Display for Requirement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.value() {
            None => f.write_str("no tag constraint"),
            Some(v) => write!(f, "{} = {v}", self.sensitivity()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedAudio {
    pub id: String,
    pub language: Language,
    pub transcript: String,
    pub tags: SpeakerTags,
    pub audio: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub id: String,
    pub language: Language,
    pub text: String,
    pub sensitivity: Sensitivity,
    pub required_value: Option<String>,
    pub seed_id: Option<String>,
    pub instruction_audio: Option<String>,
}

impl InstructionRecord {
    pub fn requirement(&self) -> std::result::Result<Requirement, String> {
        Requirement::parse(self.sensitivity, self.required_value.as_deref())
    }
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub id: String,
    pub kind: Kind,
    pub language: Language,
    pub text: String,
    pub sensitivity: Sensitivity,
    pub required_value: Option<String>,
    pub seed_id: String,
    pub query_emotion: Emotion,
    pub query_gender: Gender,
    pub query_age: Age,
    pub instruction_audio: Option<String>,
    pub response_text: String,
    pub response_emotion: ResponseTone,
    pub response_voice: String,
    pub response_audio: String,
}

impl DialogueRecord {
    pub fn query_tags(&self) -> SpeakerTags {
        SpeakerTags {
            emotion: self.query_emotion,
            gender: self.query_gender,
            age: self.query_age,
        }
    }

    /// Checks every per-record invariant; `line` locates the error.
    pub fn validate(&self, line: usize) -> Result<()> {
        let fail = |message: String| Err(DatagenError::Manifest { line, message });
        if self.id.is_empty() || self.text.trim().is_empty() || self.response_text.trim().is_empty() {
            return fail(format!("record `{}` has an empty id, text or response", self.id));
        }
        let req = match Requirement::parse(self.sensitivity, self.required_value.as_deref()) {
            Ok(r) => r,
            Err(m) => return fail(m),
        };
        if !req.satisfied_by(&self.query_tags()) {
            return fail(format!("record `{}`: seed `{}` violates {req}", self.id, self.seed_id));
        }
        match (self.kind, &self.instruction_audio) {
            (Kind::T2s, Some(_)) => fail(format!("T2S record `{}` has instruction audio", self.id)),
            (Kind::Empathetic | Kind::General, None) => fail(format!("record `{}` lacks instruction audio", self.id)),
            (Kind::Empathetic, _) if req == Requirement::None => {
                fail(format!("EMPATHETIC record `{}` has no sensitivity", self.id))
            }
            (Kind::General, _) if req != Requirement::None => fail(format!(
                "GENERAL record `{}` has sensitivity `{}`",
                self.id, self.sensitivity
            )),
            _ => Ok(()),
        }
    }
}
