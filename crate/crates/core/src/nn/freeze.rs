use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Model components that a freeze schedule addresses. Parameter names start
/// with the component's name, e.g. `llm.blocks.0.attn.qkv.weight`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    EncoderStub,
    Adapter,
    Llm,
    Projection,
    SpeechDecoder,
    Tokenizer,
    Vocoder,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::EncoderStub,
        Component::Adapter,
        Component::Llm,
        Component::Projection,
        Component::SpeechDecoder,
        Component::Tokenizer,
        Component::Vocoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::EncoderStub => "encoder_stub",
            Component::Adapter => "adapter",
            Component::Llm => "llm",
            Component::Projection => "projection",
            Component::SpeechDecoder => "speech_decoder",
            Component::Tokenizer => "tokenizer",
            Component::Vocoder => "vocoder",
        }
    }

    /// Components with no learned weights in this system.
    pub fn always_frozen(self) -> bool {
        matches!(self, Component::EncoderStub | Component::Tokenizer | Component::Vocoder)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Frozen,
    Trainable,
}

/// Which components receive updates during one training stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreezeSchedule {
    modes: BTreeMap<Component, Mode>,
    /// Mode of parameters whose prefix is not a known component.
    unlisted: Mode,
}

impl FreezeSchedule {
    pub fn all_frozen() -> Self {
        Self {
            modes: Component::ALL.iter().map(|c| (*c, Mode::Frozen)).collect(),
            unlisted: Mode::Frozen,
        }
    }

    /// Every learnable component and every unlisted parameter trains.
    pub fn all_trainable() -> Self {
        let mut schedule = Self::all_frozen();
        for c in Component::ALL {
            if !c.always_frozen() {
                schedule.modes.insert(c, Mode::Trainable);
            }
        }
        schedule.unlisted = Mode::Trainable;
        schedule
    }

    pub fn trainable(components: &[Component]) -> Result<Self> {
        let mut schedule = Self::all_frozen();
        for &c in components {
            schedule.set(c, Mode::Trainable)?;
        }
        Ok(schedule)
    }

    /// Alignment pretraining: adapter only.
    pub fn stage1() -> Self {
        Self::trainable(&[Component::Adapter]).expect("adapter is learnable")
    }

    /// Offline TTS pretraining: speech decoder only.
    pub fn stage2_offline() -> Self {
        Self::trainable(&[Component::SpeechDecoder]).expect("decoder is learnable")
    }

    /// Streaming adaptation: projection and speech decoder, LLM frozen.
    pub fn stage2_streaming() -> Self {
        Self::trainable(&[Component::Projection, Component::SpeechDecoder]).expect("learnable components")
    }

    /// Joint fine-tuning: everything except the encoder stub.
    pub fn stage3() -> Self {
        Self::trainable(&[
            Component::Adapter,
            Component::Llm,
            Component::Projection,
            Component::SpeechDecoder,
        ])
        .expect("learnable components")
    }

    pub fn set(&mut self, component: Component, mode: Mode) -> Result<()> {
        if mode == Mode::Trainable && component.always_frozen() {
            return Err(Error::Config(format!("{component} is always frozen")));
        }
        self.modes.insert(component, mode);
        Ok(())
    }

    pub fn mode(&self, component: Component) -> Mode {
        self.modes.get(&component).copied().unwrap_or(Mode::Frozen)
    }

    /// Mode for a parameter name, resolved through its leading segment.
    pub fn mode_for(&self, param_name: &str) -> Mode {
        match super::param::component_of(param_name).parse::<Component>() {
            Ok(c) => self.mode(c),
            Err(_) => self.unlisted,
        }
    }

    pub fn is_trainable(&self, param_name: &str) -> bool {
        self.mode_for(param_name) == Mode::Trainable
    }
}
