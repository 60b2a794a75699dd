//! JSON Lines manifest: one `DialogueRecord` per line, UTF-8, `\n`-terminated.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{DatagenError, Result};
use crate::types::DialogueRecord;

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    w.write_all(to_jsonl(items).as_bytes())?;
    Ok(())
}

/// Parses JSON Lines, skipping blank lines; line numbers are 1-based.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatagenError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a manifest and checks every record invariant and id uniqueness.
pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<DialogueRecord>> {
    let records: Vec<DialogueRecord> = read_jsonl(r)?;
    validate_manifest(&records)?;
    Ok(records)
}

pub fn validate_manifest(records: &[DialogueRecord]) -> Result<()> {
    let mut ids = HashSet::new();
    for (i, rec) in records.iter().enumerate() {
        rec.validate(i + 1)?;
        if !ids.insert(rec.id.as_str()) {
            return Err(DatagenError::Manifest {
                line: i + 1,
                message: format!("duplicate id `{}`", rec.id),
            });
        }
    }
    Ok(())
}
