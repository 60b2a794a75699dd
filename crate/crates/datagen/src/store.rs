//! Content-addressed WAV storage: `audio/<first two hex digits>/<sha256>.wav`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use streamspeech_core::audio::wav_bytes;

use crate::error::Result;

pub struct AudioStore {
    root: Option<PathBuf>,
    stored: Mutex<BTreeSet<String>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl AudioStore {
    /// Writes files under `root`.
    pub fn on_disk(root: &Path) -> Self {
        Self {
            root: Some(root.to_path_buf()),
            stored: Mutex::new(BTreeSet::new()),
        }
    }

    /// Computes references without writing anything.
    pub fn in_memory() -> Self {
        Self {
            root: None,
            stored: Mutex::new(BTreeSet::new()),
        }
    }

    /// Encodes `samples` as 16-bit mono WAV and returns its relative path.
    pub fn put(&self, samples: &[f64], sample_rate: u32) -> Result<String> {
        let bytes = wav_bytes(samples, sample_rate)?;
        let hash = sha256_hex(&bytes);
        let rel = format!("audio/{}/{hash}.wav", &hash[..2]);
        let mut stored = self.stored.lock().expect("audio store lock");
        if stored.insert(rel.clone()) {
            if let Some(root) = &self.root {
                let path = root.join(&rel);
                if !path.exists() {
                    std::fs::create_dir_all(path.parent().expect("nested path"))?;
                    std::fs::write(&path, &bytes)?;
                }
            }
        }
        Ok(rel)
    }

    /// Distinct files referenced so far, sorted.
    pub fn paths(&self) -> Vec<String> {
        self.stored.lock().expect("audio store lock").iter().cloned().collect()
    }
}
