//! Tag distributions of a manifest: query emotion, age and gender over
//! records with a spoken query, response emotion over all records.

use serde::{Deserialize, Serialize};
use streamspeech_core::tags::{Age, Emotion, Gender};

use crate::error::{DatagenError, Result};
use crate::types::{DialogueRecord, ResponseTone};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub total: usize,
    pub bins: Vec<Bin>,
}

impl Histogram {
    /// One bin per label in `labels` order, including empty ones.
    pub fn from_labels<'a>(labels: &[&str], observed: impl Iterator<Item = &'a str>) -> Self {
        let mut counts = vec![0usize; labels.len()];
        for v in observed {
            let k = labels.iter().position(|l| *l == v).expect("closed label");
            counts[k] += 1;
        }
        let total: usize = counts.iter().sum();
        Self {
            total,
            bins: labels
                .iter()
                .zip(counts)
                .map(|(l, count)| Bin {
                    label: l.to_string(),
                    count,
                    fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                })
                .collect(),
        }
    }

    pub fn count(&self, label: &str) -> usize {
        self.bins.iter().find(|b| b.label == label).map_or(0, |b| b.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub records: usize,
    pub query_emotion: Histogram,
    pub query_age: Histogram,
    pub query_gender: Histogram,
    pub response_emotion: Histogram,
}

fn labels<T: Copy>(all: &[T], label: fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().map(|v| label(*v)).collect()
}

pub fn manifest_stats(records: &[DialogueRecord]) -> Result<ManifestStats> {
    if records.is_empty() {
        return Err(DatagenError::EmptyManifest);
    }
    let spoken: Vec<&DialogueRecord> = records.iter().filter(|r| r.instruction_audio.is_some()).collect();
    Ok(ManifestStats {
        records: records.len(),
        query_emotion: Histogram::from_labels(
            &labels(Emotion::ALL, Emotion::label),
            spoken.iter().map(|r| r.query_emotion.label()),
        ),
        query_age: Histogram::from_labels(
            &labels(Age::ALL, Age::label),
            spoken.iter().map(|r| r.query_age.label()),
        ),
        query_gender: Histogram::from_labels(
            &labels(Gender::ALL, Gender::label),
            spoken.iter().map(|r| r.query_gender.label()),
        ),
        response_emotion: Histogram::from_labels(
            &labels(ResponseTone::ALL, ResponseTone::label),
            records.iter().map(|r| r.response_emotion.label()),
        ),
    })
}

impl ManifestStats {
    /// Plain-text table, one line per bin.
    pub fn to_table(&self) -> String {
        let mut out = format!("records {}\n", self.records);
        for (name, h) in [
            ("query_emotion", &self.query_emotion),
            ("query_age", &self.query_age),
            ("query_gender", &self.query_gender),
            ("response_emotion", &self.response_emotion),
        ] {
            for b in &h.bins {
                out.push_str(&format!(
                    "{name:<17} {:<16} {:>7} {:>8.4}\n",
                    b.label, b.count, b.fraction
                ));
            }
        }
        out
    }
}
