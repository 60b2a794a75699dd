use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use streamspeech_core::tags::{Age, Emotion, Gender};

use crate::error::{DatagenError, Result};
use crate::types::{Language, Sensitivity};

/// Sampling weights over a closed enumeration; absent labels weigh 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marginal<T: Ord>(pub BTreeMap<T, f64>);

impl<T: Ord + Copy> Marginal<T> {
    pub fn uniform(all: &[T]) -> Self {
        Self(all.iter().map(|v| (*v, 1.0)).collect())
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.0.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DatagenError::Config(format!(
                "{name} weights must be finite and non-negative"
            )));
        }
        if self.0.values().sum::<f64>() <= 0.0 {
            return Err(DatagenError::Config(format!("{name} weights sum to zero")));
        }
        Ok(())
    }

    /// Normalized probability of `v`.
    pub fn probability(&self, v: T) -> f64 {
        self.0.get(&v).copied().unwrap_or(0.0) / self.0.values().sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let (values, weights): (Vec<T>, Vec<f64>) = self.0.iter().map(|(k, w)| (*k, *w)).unzip();
        values[WeightedIndex::new(&weights).expect("validated weights").sample(rng)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Marginals {
    pub emotion: Marginal<Emotion>,
    pub gender: Marginal<Gender>,
    pub age: Marginal<Age>,
    /// Mix of sensitivity kinds among generated instructions.
    pub sensitivity: Marginal<Sensitivity>,
}

impl Default for Marginals {
    fn default() -> Self {
        Self {
            emotion: Marginal::uniform(Emotion::ALL),
            gender: Marginal::uniform(Gender::ALL),
            age: Marginal::uniform(Age::ALL),
            sensitivity: Marginal::uniform(Sensitivity::ALL),
        }
    }
}

impl Marginals {
    pub fn validate(&self) -> Result<()> {
        self.emotion.validate("emotion")?;
        self.gender.validate("gender")?;
        self.age.validate("age")?;
        self.sensitivity.validate("sensitivity")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenConfig {
    pub seed: u64,
    pub languages: Vec<Language>,
    pub seeds_per_language: usize,
    pub instructions_per_language: usize,
    /// Share of GENERAL records copied into the T2S subset.
    pub t2s_fraction: f64,
    /// The one reference voice every response is spoken in.
    pub response_voice: String,
    pub marginals: Marginals,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            languages: Language::ALL.to_vec(),
            seeds_per_language: 1000,
            instructions_per_language: 100,
            t2s_fraction: 0.5,
            response_voice: "response-voice-0".into(),
            marginals: Marginals::default(),
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(DatagenError::Config("at least one language is required".into()));
        }
        if self.seeds_per_language == 0 {
            return Err(DatagenError::Config("seeds_per_language must be at least 1".into()));
        }
        if !(self.t2s_fraction > 0.0 && self.t2s_fraction <= 1.0) {
            return Err(DatagenError::Config(format!(
                "t2s_fraction {} outside (0, 1]",
                self.t2s_fraction
            )));
        }
        if self.response_voice.is_empty() {
            return Err(DatagenError::Config("response_voice is empty".into()));
        }
        self.marginals.validate()
    }
}

/// Templates and rules of the mock clients.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rulebook {
    pub tone: BTreeMap<Emotion, String>,
    pub opener: BTreeMap<Language, BTreeMap<Emotion, String>>,
    pub address: BTreeMap<Language, BTreeMap<Age, String>>,
    pub instructions: BTreeMap<Language, BTreeMap<Sensitivity, Vec<String>>>,
    pub transcripts: BTreeMap<Language, Vec<String>>,
}

const BUILTIN_RULES: &str = include_str!("../rules/mock.toml");

impl Rulebook {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_RULES).expect("shipped rulebook is valid")
    }

    /// Parses a rulebook and checks it covers every tag and language.
    pub fn parse(text: &str) -> Result<Self> {
        let book: Rulebook = toml::from_str(text).map_err(|e| DatagenError::Config(e.to_string()))?;
        let missing = |what: String| Err(DatagenError::Config(format!("rulebook lacks {what}")));
        for e in Emotion::ALL {
            if !book.tone.contains_key(e) {
                return missing(format!("tone for `{e}`"));
            }
        }
        for lang in Language::ALL {
            if Emotion::ALL
                .iter()
                .any(|e| !book.opener.get(lang).is_some_and(|m| m.contains_key(e)))
            {
                return missing(format!("openers for `{lang}`"));
            }
            if Age::ALL
                .iter()
                .any(|a| !book.address.get(lang).is_some_and(|m| m.contains_key(a)))
            {
                return missing(format!("addresses for `{lang}`"));
            }
            if Sensitivity::ALL.iter().any(|s| {
                !book
                    .instructions
                    .get(lang)
                    .is_some_and(|m| m.get(s).is_some_and(|v| !v.is_empty()))
            }) {
                return missing(format!("instruction templates for `{lang}`"));
            }
            if !book.transcripts.get(lang).is_some_and(|v| !v.is_empty()) {
                return missing(format!("transcripts for `{lang}`"));
            }
        }
        Ok(book)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_rulebook_maps_sad_to_comforting() {
        let rules = Rulebook::builtin();
        assert_eq!(rules.tone[&Emotion::Sad], "comforting-calm");
        assert!(Rulebook::parse("[tone]\nneutral = \"neutral\"").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = DatagenConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<DatagenConfig>(&text).unwrap(), cfg);
        assert!(toml::from_str::<DatagenConfig>("bogus = 1").is_err());
        let partial: DatagenConfig = toml::from_str("seed = 4\n[marginals.age]\nelderly = 2.0\nchild = 1.0").unwrap();
        assert_eq!(partial.marginals.age.probability(Age::Elderly), 2.0 / 3.0);
        assert_eq!(partial.marginals.age.probability(Age::Adult), 0.0);
        assert!(toml::from_str::<DatagenConfig>("[marginals.age]\nancient = 1.0").is_err());
    }

    #[test]
    fn bad_weights_are_rejected() {
        let mut cfg = DatagenConfig::default();
        cfg.marginals.gender = Marginal(BTreeMap::from([(Gender::Male, 0.0)]));
        assert!(cfg.validate().is_err());
        let mut cfg = DatagenConfig::default();
        cfg.t2s_fraction = 0.0;
        assert!(cfg.validate().is_err());
    }
}
