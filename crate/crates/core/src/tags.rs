//! Closed paralinguistic tag vocabularies.

#[doc(hidden)]
pub use serde as __serde;

/// Closed enumeration serialized by its label.
#[macro_export]
macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).expect("variant listed in ALL")
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.label())
            }
        }

        impl $crate::tags::__serde::Serialize for $name {
            fn serialize<S: $crate::tags::__serde::Serializer>(&self, s: S) -> ::std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.label())
            }
        }

        impl<'de> $crate::tags::__serde::Deserialize<'de> for $name {
            fn deserialize<D: $crate::tags::__serde::Deserializer<'de>>(d: D) -> ::std::result::Result<Self, D::Error> {
                let s = <::std::string::String as $crate::tags::__serde::Deserialize>::deserialize(d)?;
                s.parse().map_err(<D::Error as $crate::tags::__serde::de::Error>::custom)
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| $crate::error::Error::Config(format!("unknown {} `{s}`", stringify!($name))))
            }
        }
    };
}

closed_enum!(
    /// Emotion carried by a query utterance.
    Emotion {
        Neutral => "neutral",
        Happy => "happy",
        Sad => "sad",
        Angry => "angry",
        Surprised => "surprised",
        Fearful => "fearful",
        Disgusted => "disgusted",
    }
);

closed_enum!(Gender {
    Male => "male",
    Female => "female",
});

closed_enum!(Age {
    Child => "child",
    Adult => "adult",
    Elderly => "elderly",
});

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for e in Emotion::ALL {
            assert_eq!(e.label().parse::<Emotion>().unwrap(), *e);
        }
        assert_eq!(Emotion::ALL.len(), 7);
        assert_eq!(Age::Elderly.index(), 2);
        assert!("elderly".parse::<Emotion>().is_err());
    }

    #[test]
    fn serde_uses_labels() {
        assert_eq!(serde_json::to_string(&Age::Elderly).unwrap(), "\"elderly\"");
        assert_eq!(serde_json::from_str::<Gender>("\"female\"").unwrap(), Gender::Female);
        assert!(serde_json::from_str::<Emotion>("\"calm\"").is_err());
    }
}
